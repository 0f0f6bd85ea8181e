#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2p/config.hpp"
#include "c2p/dataset_io.hpp"
#include "c2p/evaluation.hpp"
#include "c2p/filter_state.hpp"
#include "c2p/msckf_update.hpp"

namespace c2p {

/// Timestamped IMU poses with geodesic interpolation in between.
class PoseTrack {
 public:
  void push(double t, const Pose& pose);
  bool empty() const { return stamps_.empty(); }
  double begin_time() const { return stamps_.front(); }
  double end_time() const { return stamps_.back(); }
  /// Throws RejectedInput outside [begin - tol, end + tol].
  Pose at(double t, double tol = 1e-6) const;

 private:
  std::vector<double> stamps_;
  std::vector<Pose> poses_;
};

/// Re-expresses every point in the LiDAR frame at the scan timestamp, using
/// the body poses of `track` at each point's emission time.
LidarScan undistort_scan(const LidarScan& scan, const PoseTrack& track, const Pose& extrinsic);

struct StageTimes {
  double preprocess = 0.0;   // propagation, cloning, undistortion
  double association = 0.0;  // voxelization and plane fitting
  double update = 0.0;       // measurement construction, projection, EKF
  double others = 0.0;       // marginalization and bookkeeping

  double total() const { return preprocess + association + update + others; }
};

struct FrameLog {
  FrameId frame_id = 0;
  double timestamp = 0.0;
  bool updated = false;
  int planes = 0;                        // planes that entered the update
  int planes_dropped = 0;                // too few observations or no constraint left
  std::int64_t cluster_measurements = 0;  // plane x frame pairs (N_pl)
  std::int64_t points = 0;               // raw points behind them (N_pt)
  Eigen::Index rows = 0;                 // measurement rows after projection
  Eigen::Index raw_rows = 0;             // rows before projection
  StageTimes times;
  double covariance_trace = 0.0;
};

struct OdometryResult {
  std::vector<TimedPose> poses;  // one per processed scan, IMU frame
  std::vector<PoseCovariance> covariances;
  std::vector<FrameLog> logs;
  std::size_t skipped_scans = 0;
  bool diverged = false;
  std::string failure;

  std::vector<DimensionSample> dimension_samples() const;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Streaming estimator: feed the IMU stream once, then scans in time order.
class Odometry {
 public:
  Odometry(const PipelineConfig& config, const ImuNavState& initial,
           std::span<const ImuSample> imu);

  /// Returns false (and leaves the filter untouched) when the IMU stream
  /// does not cover the scan. Throws DivergenceError.
  bool process_scan(const LidarScan& scan, FrameId frame_id, FrameLog* log = nullptr);

  const FilterState& state() const { return state_; }

 private:
  bool covers(double t) const;
  PoseTrack propagate_to(double t);
  /// With an anchor, only planes observed by that frame are used and their
  /// points are retired afterwards.
  void update(FrameLog& log, std::optional<FrameId> anchor);

  PipelineConfig config_;
  Pose extrinsic_;
  std::span<const ImuSample> imu_;
  std::size_t cursor_ = 0;
  FilterState state_;
  std::deque<std::vector<Vec3>> frame_points_;  // parallel to state_.clones
};

/// Initial navigation state: the dataset's when available (biases zeroed
/// unless configured otherwise), else gravity-aligned from the first 0.2 s
/// of accelerometer data at rest.
ImuNavState initial_state(const Dataset& data, const PipelineConfig& config);

OdometryResult run_odometry(const Dataset& data, const PipelineConfig& config);

/// estimate.csv, pose_covariance.csv and frames.csv.
void write_odometry_outputs(const std::filesystem::path& dir, const OdometryResult& result);

RunMetrics evaluate_run(const OdometryResult& result, const Dataset& data, const std::string& name);

struct MonteCarloRun {
  std::uint64_t seed = 0;
  OdometryResult odometry;
  RunMetrics metrics;
};

/// Simulates and estimates n_runs independent datasets; run i uses the seed
/// derive_seed(seed, i). A diverged run is flagged and the others continue.
std::vector<MonteCarloRun> monte_carlo_run(const AppConfig& config, std::size_t n_runs,
                                           std::uint64_t seed);

}  // namespace c2p
