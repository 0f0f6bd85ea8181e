#include "c2p/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include "c2p/parallel.hpp"
#include "c2p/simulator.hpp"
#include "c2p/voxel_map.hpp"

namespace c2p {

namespace {

constexpr double kTimeEps = 1e-9;

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

void check_divergence(const FilterState& s, double limit) {
  const double tr = s.covariance.trace();
  if (!std::isfinite(tr) || tr > limit || !s.nav.position.allFinite()) {
    throw DivergenceError(fmt::format("filter diverged at t={:.3f}: trace(P)={:.3e}",
                                      s.nav.timestamp, tr));
  }
}

}  // namespace

void PoseTrack::push(double t, const Pose& pose) {
  if (!stamps_.empty() && !(t > stamps_.back())) throw RejectedInput("pose track must increase");
  stamps_.push_back(t);
  poses_.push_back(pose);
}

Pose PoseTrack::at(double t, double tol) const {
  if (stamps_.empty()) throw RejectedInput("empty pose track");
  if (t < stamps_.front() - tol || t > stamps_.back() + tol) {
    throw RejectedInput(fmt::format("pose track [{}, {}] does not cover t={}", stamps_.front(),
                                    stamps_.back(), t));
  }
  if (t <= stamps_.front()) return poses_.front();
  if (t >= stamps_.back()) return poses_.back();
  const auto it = std::upper_bound(stamps_.begin(), stamps_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - stamps_.begin()) - 1;
  const double alpha = (t - stamps_[i]) / (stamps_[i + 1] - stamps_[i]);
  return interpolate(poses_[i], poses_[i + 1], alpha);
}

LidarScan undistort_scan(const LidarScan& scan, const PoseTrack& track, const Pose& extrinsic) {
  if (scan.offsets.size() != scan.points.size()) throw RejectedInput("scan offsets/points mismatch");
  LidarScan out;
  out.timestamp = scan.timestamp;
  out.points.resize(scan.points.size());
  out.offsets.assign(scan.points.size(), 0.0);
  const Pose ref_inv = track.at(scan.timestamp).compose(extrinsic).inverse();

  // Consecutive points usually share an emission time (one firing of all rings).
  double cached_offset = std::numeric_limits<double>::quiet_NaN();
  Pose rel;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const double off = scan.offsets[i];
    if (off != cached_offset) {
      cached_offset = off;
      rel = off == 0.0 ? Pose::identity()
                       : ref_inv.compose(track.at(scan.timestamp + off).compose(extrinsic));
    }
    out.points[i] = rel.transform(scan.points[i]);
  }
  return out;
}

std::vector<DimensionSample> OdometryResult::dimension_samples() const {
  std::vector<DimensionSample> out;
  for (const FrameLog& l : logs) {
    if (l.updated) out.push_back({l.cluster_measurements, l.points});
  }
  return out;
}

Odometry::Odometry(const PipelineConfig& config, const ImuNavState& initial,
                   std::span<const ImuSample> imu)
    : config_(config), extrinsic_(config.extrinsic()), imu_(imu) {
  config_.validate();
  if (imu_.size() < 2) throw RejectedInput("IMU stream needs at least two samples");
  state_.nav = initial;
  Eigen::VectorXd sd(kImuErrorDim);
  sd << Vec3::Constant(config.init_rotation_sigma), Vec3::Constant(config.init_position_sigma),
      Vec3::Constant(config.init_velocity_sigma), Vec3::Constant(config.init_gyro_bias_sigma),
      Vec3::Constant(config.init_accel_bias_sigma);
  state_.covariance = sd.array().square().matrix().asDiagonal();
  while (cursor_ + 1 < imu_.size() && imu_[cursor_ + 1].timestamp <= initial.timestamp + kTimeEps) {
    ++cursor_;
  }
  if (imu_[cursor_].timestamp > initial.timestamp + kTimeEps) {
    throw RejectedInput("IMU stream starts after the initial state");
  }
}

bool Odometry::covers(double t) const { return imu_.back().timestamp >= t - kTimeEps; }

PoseTrack Odometry::propagate_to(double t) {
  PoseTrack track;
  track.push(state_.nav.timestamp, state_.nav.pose());
  while (state_.nav.timestamp < t - kTimeEps) {
    const ImuSample& s0 = imu_[cursor_];
    const ImuSample& s1 = imu_[std::min(cursor_ + 1, imu_.size() - 1)];
    const double t_next = std::min(s1.timestamp, t);
    const ImuSample a = ImuSample::interpolate(s0, s1, state_.nav.timestamp);
    const ImuSample b = ImuSample::interpolate(s0, s1, t_next);
    const double dt = t_next - state_.nav.timestamp;
    if (dt > kTimeEps) {
      propagate_state(state_, ImuSample::midpoint(a, b), config_.imu, dt);
    }
    state_.nav.timestamp = t_next;
    if (s1.timestamp <= t_next + kTimeEps && cursor_ + 1 < imu_.size()) ++cursor_;
    if (dt > kTimeEps) track.push(state_.nav.timestamp, state_.nav.pose());
  }
  state_.nav.timestamp = std::max(state_.nav.timestamp, t);
  return track;
}

bool Odometry::process_scan(const LidarScan& scan, FrameId frame_id, FrameLog* log_out) {
  FrameLog log;
  log.frame_id = frame_id;
  log.timestamp = scan.timestamp;
  if (!covers(scan.timestamp) || scan.timestamp <= state_.nav.timestamp + kTimeEps) {
    return false;
  }
  Stopwatch sw;
  const PoseTrack track = propagate_to(scan.timestamp);
  state_ = augment_clone(state_, scan.timestamp, frame_id);
  frame_points_.push_back(undistort_scan(scan, track, extrinsic_).points);
  log.times.preprocess = sw.lap();

  const std::size_t W = static_cast<std::size_t>(config_.window_size);
  const std::size_t n = state_.clones.size();
  switch (config_.policy) {
    case UpdatePolicy::kConsume:
      if (n >= W) update(log, state_.clones.front().frame_id);
      break;
    case UpdatePolicy::kSliding:
      if (n >= 2) update(log, std::nullopt);
      break;
    case UpdatePolicy::kChunked:
      if (n >= W) update(log, std::nullopt);
      break;
  }

  sw.lap();
  const std::size_t keep =
      config_.policy == UpdatePolicy::kChunked ? (n >= W ? 0 : n) : std::min(n, W - 1);
  while (state_.clones.size() > keep) {
    state_ = marginalize_oldest(state_);
    frame_points_.pop_front();
  }
  log.covariance_trace = state_.covariance.trace();
  log.times.others += sw.lap();
  if (log_out) *log_out = log;
  return true;
}

void Odometry::update(FrameLog& log, std::optional<FrameId> anchor) {
  Stopwatch sw;
  std::vector<WindowFrame> frames;
  frames.reserve(state_.clones.size());
  for (std::size_t i = 0; i < state_.clones.size(); ++i) {
    frames.push_back({state_.clones[i].frame_id, state_.clones[i].pose.compose(extrinsic_),
                      frame_points_[i]});
  }
  VoxelMapParams vp = config_.voxel;
  vp.threads = config_.threads;
  vp.max_point_distance = config_.outlier_sigma * config_.lidar_sigma;
  const VoxelMap map = build_window_voxels(frames, vp);
  const std::vector<const VoxelCell*> leaves = map.planar_leaves();
  log.times.association = sw.lap();

  const StateLayout layout(state_);
  const double var = config_.lidar_sigma * config_.lidar_sigma;
  const bool point_mode = config_.mode == MeasurementMode::kPoint;
  std::vector<std::optional<ProjectedMeasurementBlock>> blocks(leaves.size());
  std::vector<std::int64_t> n_obs(leaves.size(), 0), n_pts(leaves.size(), 0);
  std::vector<Eigen::Index> raw_rows(leaves.size(), 0);
  std::vector<char> considered(leaves.size(), 0);

  parallel_for(leaves.size(), config_.threads, [&](std::size_t k) {
    const VoxelCell& cell = *leaves[k];
    if (anchor) {
      const FrameSlice* a = cell.slice(*anchor);
      if (!a || a->local_cluster.n == 0) return;
    }
    considered[k] = 1;
    std::int64_t observed = 0;
    for (const FrameSlice& s : cell.frames) observed += s.local_cluster.n > 0 ? 1 : 0;
    if (observed < config_.min_observations) return;
    const PlanePatch& plane = *cell.plane;
    StackedPlaneObservations st;
    std::int64_t pts = 0;
    if (point_mode) {
      std::vector<PointMeasurements> obs;
      for (const FrameSlice& s : cell.frames) {
        if (s.local_points.empty()) continue;
        obs.push_back(make_point_measurements(s.local_points, state_, layout, s.frame_id,
                                              extrinsic_, plane));
        pts += static_cast<std::int64_t>(s.local_points.size());
      }
      st = stack_plane_observations(obs);
    } else {
      std::vector<CompressedMeasurement> obs;
      for (const FrameSlice& s : cell.frames) {
        if (s.local_cluster.n == 0) continue;
        obs.push_back(make_cluster_measurement(s.local_cluster, state_, layout, s.frame_id,
                                               extrinsic_, plane));
        pts += s.local_cluster.n;
      }
      st = stack_plane_observations(obs);
    }
    raw_rows[k] = st.residual.size();
    double plane_var = var;
    if (config_.fit_variance_floor) {
      const double n = static_cast<double>(cell.aggregate.n);
      plane_var = std::max(var, plane.eigenvalues[2] * n / (n - 3.0));
    }
    blocks[k] = nullspace_project(st.residual, st.H_x, st.H_pi, plane_var);
    if (blocks[k]) {
      n_obs[k] = observed;
      n_pts[k] = pts;
    }
  });

  std::vector<ProjectedMeasurementBlock> used;
  std::vector<std::vector<char>> retired;
  if (anchor) {
    for (const std::vector<Vec3>& pts : frame_points_) retired.emplace_back(pts.size(), 0);
  }
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    if (!blocks[k]) {
      if (considered[k]) ++log.planes_dropped;
      continue;
    }
    if (anchor) {
      for (const FrameSlice& s : leaves[k]->frames) {
        std::vector<char>& flags = retired[state_.clone_index(s.frame_id)];
        for (std::uint32_t idx : s.point_indices) flags[idx] = 1;
      }
    }
    ++log.planes;
    log.cluster_measurements += n_obs[k];
    log.points += n_pts[k];
    log.raw_rows += raw_rows[k];
    log.rows += blocks[k]->rows();
    used.push_back(std::move(*blocks[k]));
  }

  UpdateOptions opt;
  opt.chi2_gate = config_.chi2_gate;
  opt.chi2_probability = config_.chi2_probability;
  state_ = ekf_update(state_, used, opt);
  log.updated = true;
  check_divergence(state_, config_.divergence_trace);
  log.times.update = sw.lap();
  for (std::size_t f = 0; f < retired.size(); ++f) {
    std::vector<Vec3>& pts = frame_points_[f];
    std::size_t w = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!retired[f][i]) pts[w++] = pts[i];
    }
    pts.resize(w);
  }
  log.times.others += sw.lap();
}

ImuNavState initial_state(const Dataset& data, const PipelineConfig& config) {
  if (data.imu.empty()) throw RejectedInput("dataset has no IMU samples");
  if (data.initial) {
    ImuNavState n = *data.initial;
    if (!config.init_biases_from_dataset) {
      n.gyro_bias.setZero();
      n.accel_bias.setZero();
    }
    return n;
  }
  Vec3 mean = Vec3::Zero();
  int count = 0;
  const double t0 = data.imu.front().timestamp;
  for (const ImuSample& s : data.imu) {
    if (s.timestamp > t0 + 0.2) break;
    mean += s.accel;
    ++count;
  }
  mean /= count;
  ImuNavState n;
  n.timestamp = t0;
  // Rotate the measured specific force onto +z.
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(mean.normalized(), Vec3::UnitZ());
  n.orientation = Rotation(q);
  return n;
}

OdometryResult run_odometry(const Dataset& data, const PipelineConfig& config) {
  if (!data.scans) throw RejectedInput("dataset has no scans");
  OdometryResult result;
  Odometry odo(config, initial_state(data, config), data.imu);
  for (std::size_t i = 0; i < data.scans->size(); ++i) {
    const LidarScan scan = data.scans->load(i);
    FrameLog log;
    try {
      if (!odo.process_scan(scan, static_cast<FrameId>(i), &log)) {
        spdlog::warn("scan {} at t={:.3f} not covered by IMU data; skipped", i, scan.timestamp);
        ++result.skipped_scans;
        continue;
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.failure = e.what();
      spdlog::error("{}", e.what());
      break;
    }
    const FilterState& s = odo.state();
    result.poses.push_back({scan.timestamp, s.nav.pose()});
    result.covariances.push_back(s.pose_covariance());
    result.logs.push_back(log);
    spdlog::debug("scan {}: planes {} (N_pl {}, N_pt {}), rows {}", i, log.planes,
                  log.cluster_measurements, log.points, log.rows);
  }
  return result;
}

void write_odometry_outputs(const std::filesystem::path& dir, const OdometryResult& result) {
  std::filesystem::create_directories(dir);
  write_trajectory_csv(dir / "estimate.csv", result.poses);
  std::vector<double> stamps;
  for (const TimedPose& p : result.poses) stamps.push_back(p.timestamp);
  write_covariance_csv(dir / "pose_covariance.csv", stamps, result.covariances);
  auto out = fmt::output_file((dir / "frames.csv").string());
  out.print("frame,t,updated,planes,planes_dropped,n_pl,n_pt,raw_rows,rows,t_preprocess,"
            "t_association,t_update,t_others,trace\n");
  for (const FrameLog& l : result.logs) {
    out.print("{},{:.9g},{},{},{},{},{},{},{},{:.6g},{:.6g},{:.6g},{:.6g},{:.9g}\n", l.frame_id,
              l.timestamp, l.updated ? 1 : 0, l.planes, l.planes_dropped, l.cluster_measurements,
              l.points, l.raw_rows, l.rows, l.times.preprocess, l.times.association,
              l.times.update, l.times.others, l.covariance_trace);
  }
}

RunMetrics evaluate_run(const OdometryResult& result, const Dataset& data, const std::string& name) {
  RunMetrics m;
  m.name = name;
  m.diverged = result.diverged;
  if (result.diverged || result.poses.empty() || data.groundtruth.empty()) {
    m.diverged = true;
    return m;
  }
  const std::vector<TimedPose> gt = to_timed_poses(data.groundtruth);
  m.ape = compute_ape(result.poses, gt, data.trajectory_length);
  m.nees = compute_nees(result.poses, gt, result.covariances);
  const auto dims = result.dimension_samples();
  m.dims = dimension_stats(dims);
  return m;
}

std::vector<MonteCarloRun> monte_carlo_run(const AppConfig& config, std::size_t n_runs,
                                           std::uint64_t seed) {
  if (n_runs < 1) throw RejectedInput("at least one Monte Carlo run is required");
  std::vector<MonteCarloRun> runs;
  runs.reserve(n_runs);
  for (std::size_t i = 0; i < n_runs; ++i) {
    MonteCarloRun r;
    r.seed = derive_seed(seed, i);
    const Dataset data = simulate_dataset(config.simulation, r.seed, config.pipeline.extrinsic());
    try {
      r.odometry = run_odometry(data, config.pipeline);
    } catch (const std::exception& e) {
      r.odometry.diverged = true;
      r.odometry.failure = e.what();
      spdlog::error("run {} failed: {}", i, e.what());
    }
    r.metrics = evaluate_run(r.odometry, data, fmt::format("run_{:03d}", i));
    runs.push_back(std::move(r));
  }
  return runs;
}

}  // namespace c2p
