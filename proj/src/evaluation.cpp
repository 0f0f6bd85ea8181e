#include "c2p/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <Eigen/Cholesky>
#include <fmt/format.h>
#include <fmt/ostream.h>

namespace c2p {

Vector6 pose_error(const Pose& estimate, const Pose& truth) {
  Vector6 e;
  e.head<3>() = estimate.rotation.boxminus(truth.rotation);
  e.tail<3>() = truth.position - estimate.position;
  return e;
}

std::vector<std::ptrdiff_t> associate_by_time(std::span<const TimedPose> est,
                                              std::span<const TimedPose> gt, double tolerance) {
  std::vector<std::ptrdiff_t> out(est.size(), -1);
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    auto it = std::lower_bound(gt.begin(), gt.end(), t, [](const TimedPose& g, double v) {
      return g.timestamp < v;
    });
    std::ptrdiff_t best = -1;
    double best_dt = tolerance;
    for (auto c : {it, it == gt.begin() ? gt.end() : it - 1}) {
      if (c == gt.end()) continue;
      const double dt = std::abs(c->timestamp - t);
      if (dt <= best_dt) {
        best_dt = dt;
        best = c - gt.begin();
      }
    }
    out[i] = best;
  }
  return out;
}

ApeResult compute_ape(std::span<const TimedPose> est, std::span<const TimedPose> gt, double length,
                      double tolerance) {
  if (!(length > 0.0)) throw EvaluationError("trajectory length must be positive");
  const auto match = associate_by_time(est, gt, tolerance);
  double sum_p = 0.0, sum_r = 0.0;
  ApeResult r;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (match[i] < 0) continue;
    const Vector6 e = pose_error(est[i].pose, gt[static_cast<std::size_t>(match[i])].pose);
    sum_p += e.tail<3>().squaredNorm();
    const double ang = e.head<3>().norm() * 180.0 / std::numbers::pi;
    sum_r += ang * ang;
    ++r.matched;
  }
  if (r.matched == 0) throw EvaluationError("no estimate overlaps the ground truth in time");
  const double n = static_cast<double>(r.matched);
  r.translation_percent = std::sqrt(sum_p / n) / length * 100.0;
  r.rotation_deg_per_m = std::sqrt(sum_r / n) / length;
  return r;
}

NeesResult compute_nees(std::span<const TimedPose> est, std::span<const TimedPose> gt,
                        std::span<const PoseCovariance> covs, double tolerance) {
  if (covs.size() != est.size()) throw EvaluationError("one covariance per estimate is required");
  const auto match = associate_by_time(est, gt, tolerance);
  NeesResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (match[i] < 0) {
      ++r.skipped;
      continue;
    }
    const Vector6 e = pose_error(est[i].pose, gt[static_cast<std::size_t>(match[i])].pose);
    PoseCovariance P = 0.5 * (covs[i] + covs[i].transpose());
    Eigen::LLT<PoseCovariance> llt(P);
    if (llt.info() != Eigen::Success) {
      P.diagonal().array() += 1e-12;
      llt.compute(P);
      if (llt.info() != Eigen::Success) {
        ++r.skipped;
        continue;
      }
      ++r.regularized;
    }
    const double v = e.dot(llt.solve(e));
    r.per_step.push_back(v);
    sum += v;
    ++r.used;
  }
  r.average = r.used ? sum / static_cast<double>(r.used) : 0.0;
  return r;
}

double reduction_percent(double planes, double points) {
  if (!(points > 0.0)) return 0.0;
  return std::max(0.0, (1.0 - 4.0 * planes / points) * 100.0);
}

DimensionStats dimension_stats(std::span<const DimensionSample> samples) {
  DimensionStats s;
  if (samples.empty()) return s;
  double pl = 0.0, pt = 0.0;
  for (const DimensionSample& d : samples) {
    pl += static_cast<double>(d.planes);
    pt += static_cast<double>(d.points);
  }
  s.avg_planes = pl / static_cast<double>(samples.size());
  s.avg_points = pt / static_cast<double>(samples.size());
  s.reduction_percent = reduction_percent(s.avg_planes, s.avg_points);
  return s;
}

void MetricsReport::aggregate() {
  mean_translation_percent = mean_rotation_deg_per_m = average_nees = 0.0;
  diverged = 0;
  double nees_sum = 0.0, pl = 0.0, pt = 0.0;
  std::size_t nees_n = 0, ok = 0;
  for (const RunMetrics& r : runs) {
    if (r.diverged) {
      ++diverged;
      continue;
    }
    ++ok;
    mean_translation_percent += r.ape.translation_percent;
    mean_rotation_deg_per_m += r.ape.rotation_deg_per_m;
    nees_sum += r.nees.average * static_cast<double>(r.nees.used);
    nees_n += r.nees.used;
    pl += r.dims.avg_planes;
    pt += r.dims.avg_points;
  }
  if (ok) {
    mean_translation_percent /= static_cast<double>(ok);
    mean_rotation_deg_per_m /= static_cast<double>(ok);
    dims.avg_planes = pl / static_cast<double>(ok);
    dims.avg_points = pt / static_cast<double>(ok);
    dims.reduction_percent = reduction_percent(dims.avg_planes, dims.avg_points);
  }
  if (nees_n) average_nees = nees_sum / static_cast<double>(nees_n);
}

void write_metrics_csv(std::ostream& os, const MetricsReport& report) {
  os << kMetricsSchema << '\n';
  os << "run,diverged,translation_percent,rotation_deg_per_m,nees,nees_steps,avg_planes,"
        "avg_points,reduction_percent\n";
  auto row = [&](const std::string& name, bool div, double tr, double rot, double nees,
                 std::size_t steps, const DimensionStats& d) {
    fmt::print(os, "{},{},{:.10g},{:.10g},{:.10g},{},{:.10g},{:.10g},{:.10g}\n", name, div ? 1 : 0,
               tr, rot, nees, steps, d.avg_planes, d.avg_points, d.reduction_percent);
  };
  std::size_t steps = 0;
  for (const RunMetrics& r : report.runs) {
    row(r.name, r.diverged, r.ape.translation_percent, r.ape.rotation_deg_per_m, r.nees.average,
        r.nees.used, r.dims);
    if (!r.diverged) steps += r.nees.used;
  }
  row("aggregate", report.diverged > 0, report.mean_translation_percent,
      report.mean_rotation_deg_per_m, report.average_nees, steps, report.dims);
}

void write_metrics_summary(std::ostream& os, const MetricsReport& report) {
  fmt::print(os, "runs:                {} ({} diverged)\n", report.runs.size(), report.diverged);
  fmt::print(os, "translation APE:     {:.4f} %\n", report.mean_translation_percent);
  fmt::print(os, "rotation APE:        {:.6f} deg/m\n", report.mean_rotation_deg_per_m);
  fmt::print(os, "average pose NEES:   {:.3f}\n", report.average_nees);
  fmt::print(os, "avg planes / update: {:.1f}\n", report.dims.avg_planes);
  fmt::print(os, "avg points / update: {:.1f}\n", report.dims.avg_points);
  fmt::print(os, "dimension reduction: {:.2f} %\n", report.dims.reduction_percent);
}

}  // namespace c2p
