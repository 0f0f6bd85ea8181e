#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "c2p/dataset_io.hpp"

namespace c2p {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vector6 = Eigen::Matrix<double, 6, 1>;

/// Error of an estimate in the filter's chart: R_true = R_est Exp(dtheta),
/// p_true = p_est + dp. Returned as (dtheta, dp).
Vector6 pose_error(const Pose& estimate, const Pose& truth);

/// For each estimate, the index of the ground-truth sample nearest in time,
/// or -1 when none lies within `tolerance`.
std::vector<std::ptrdiff_t> associate_by_time(std::span<const TimedPose> est,
                                              std::span<const TimedPose> gt, double tolerance);

struct ApeResult {
  double translation_percent = 0.0;  // RMS position error / length * 100
  double rotation_deg_per_m = 0.0;   // RMS geodesic angle (deg) / length
  std::size_t matched = 0;
};

/// Throws EvaluationError when no estimate matches a ground-truth stamp.
ApeResult compute_ape(std::span<const TimedPose> est, std::span<const TimedPose> gt, double length,
                      double tolerance = 5e-3);

struct NeesResult {
  double average = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;      // singular beyond regularization or unmatched
  std::size_t regularized = 0;  // needed 1e-12 I to factor
  std::vector<double> per_step;
};

/// Average of e^T P^-1 e over matched steps; covs[i] belongs to est[i].
NeesResult compute_nees(std::span<const TimedPose> est, std::span<const TimedPose> gt,
                        std::span<const PoseCovariance> covs, double tolerance = 5e-3);

/// Per-update dimension log.
struct DimensionSample {
  std::int64_t planes = 0;  // cluster measurements (plane x frame pairs) used
  std::int64_t points = 0;  // raw points behind them
};

struct DimensionStats {
  double avg_planes = 0.0;
  double avg_points = 0.0;
  double reduction_percent = 0.0;
};

/// (1 - 4 N_pl / N_pt) * 100, clamped at 0.
double reduction_percent(double planes, double points);
DimensionStats dimension_stats(std::span<const DimensionSample> samples);

struct RunMetrics {
  std::string name;
  bool diverged = false;
  ApeResult ape;
  NeesResult nees;
  DimensionStats dims;
};

struct MetricsReport {
  std::vector<RunMetrics> runs;
  double mean_translation_percent = 0.0;
  double mean_rotation_deg_per_m = 0.0;
  double average_nees = 0.0;  // over all steps of all non-diverged runs
  DimensionStats dims;
  std::size_t diverged = 0;

  void aggregate();
};

inline constexpr const char* kMetricsSchema = "# c2p-metrics v1";

void write_metrics_csv(std::ostream& os, const MetricsReport& report);
void write_metrics_summary(std::ostream& os, const MetricsReport& report);

}  // namespace c2p
