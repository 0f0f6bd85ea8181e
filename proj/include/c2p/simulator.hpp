#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "c2p/dataset_io.hpp"
#include "c2p/geometry.hpp"
#include "c2p/imu_propagation.hpp"

namespace c2p {

/// Finite rectangle corner + s*edge_u + t*edge_v, s, t in [0, 1].
struct Facet {
  Vec3 corner = Vec3::Zero();
  Vec3 edge_u = Vec3::UnitX();
  Vec3 edge_v = Vec3::UnitY();
  Vec3 normal = Vec3::UnitZ();  // unit, edge_u x edge_v direction

  double distance() const { return normal.dot(corner); }
};

struct RayHit {
  double range = 0.0;
  std::size_t facet = 0;
};

class PlanarWorld {
 public:
  /// Throws RejectedInput for degenerate (parallel or zero) edges.
  void add_facet(const Vec3& corner, const Vec3& edge_u, const Vec3& edge_v);
  const std::vector<Facet>& facets() const { return facets_; }

  /// Nearest facet hit along origin + r * dir (dir unit), r in [min_range, max_range].
  std::optional<RayHit> raycast(const Vec3& origin, const Vec3& dir, double max_range,
                                double min_range = 0.0) const;

 private:
  std::vector<Facet> facets_;
};

struct RoomSpec {
  Vec3 size{20.0, 15.0, 5.0};
  Vec3 min_corner{-9.7, -7.35, -1.35};
  double yaw = 0.12;  // room rotation about z, keeps walls off the voxel grid
  bool interior_facets = true;
};

PlanarWorld make_room(const RoomSpec& spec);

/// Kinematics of the body (IMU) frame at one instant.
struct TrajectoryPoint {
  Pose pose;
  Vec3 velocity = Vec3::Zero();      // world
  Vec3 acceleration = Vec3::Zero();  // world, without gravity
  Vec3 angular_velocity = Vec3::Zero();  // body
};

class Trajectory {
 public:
  virtual ~Trajectory() = default;
  virtual TrajectoryPoint evaluate(double t) const = 0;
  virtual double duration() const = 0;
  /// Arc length over [0, duration], by quadrature.
  double length(int samples = 20000) const;
};

class HoverTrajectory final : public Trajectory {
 public:
  HoverTrajectory(Pose pose, double duration) : pose_(pose), duration_(duration) {}
  TrajectoryPoint evaluate(double t) const override;
  double duration() const override { return duration_; }

 private:
  Pose pose_;
  double duration_;
};

/// Level circle with the body yawing along the tangent.
class CircleTrajectory final : public Trajectory {
 public:
  CircleTrajectory(Vec3 center, double radius, double rate, double duration)
      : center_(center), radius_(radius), rate_(rate), duration_(duration) {}
  TrajectoryPoint evaluate(double t) const override;
  double duration() const override { return duration_; }

 private:
  Vec3 center_;
  double radius_, rate_, duration_;
};

/// Fixed position, constant yaw rate.
class YawSpinTrajectory final : public Trajectory {
 public:
  YawSpinTrajectory(Vec3 position, double yaw_rate, double duration)
      : position_(position), yaw_rate_(yaw_rate), duration_(duration) {}
  TrajectoryPoint evaluate(double t) const override;
  double duration() const override { return duration_; }

 private:
  Vec3 position_;
  double yaw_rate_, duration_;
};

struct OvalLoopSpec {
  Vec3 center{0.3, 0.15, 0.0};
  double semi_axis_x = 7.0;
  double semi_axis_y = 4.5;
  double loops = 5.0;
  double target_length = 182.0;  // semi axes are scaled to reach it; <= 0 disables
  double mean_speed = 1.5;       // m/s, sets the duration
  double z_amplitude = 0.25;
  double z_cycles_per_loop = 2.0;
  double yaw_amplitude = 0.3;
  double yaw_cycles_per_loop = 3.0;
  double tilt_amplitude = 0.05;  // roll/pitch, rad
};

/// Closed oval loop with sinusoidal height, yaw wobble around the heading and
/// small roll/pitch oscillation.
class OvalLoopTrajectory final : public Trajectory {
 public:
  explicit OvalLoopTrajectory(const OvalLoopSpec& spec);
  TrajectoryPoint evaluate(double t) const override;
  double duration() const override { return duration_; }
  double scale() const { return scale_; }

 private:
  TrajectoryPoint evaluate_scaled(double t, double scale) const;
  OvalLoopSpec spec_;
  double scale_ = 1.0;
  double duration_ = 0.0;
  double rate_ = 0.0;  // loop phase rate, rad/s
};

struct LidarModel {
  int rings = 8;
  double vertical_resolution_deg = 3.0;
  double horizontal_resolution_deg = 0.25;
  double rate_hz = 10.0;
  double range_noise = 0.03;
  double max_range = 60.0;
  double min_range = 0.3;

  void validate() const;
  int azimuth_steps() const;
  double period() const { return 1.0 / rate_hz; }
};

struct ImuSimulationSpec {
  double rate_hz = 250.0;
  ImuNoiseParams noise;
  double gyro_bias_init = 0.01;
  double accel_bias_init = 0.1;
};

struct ImuStream {
  std::vector<ImuSample> samples;
  std::vector<Vec3> gyro_bias;  // true bias per sample
  std::vector<Vec3> accel_bias;
};

/// Deterministic 64-bit stream seed derived from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Samples at k / rate for k = 0 .. floor(duration * rate).
ImuStream sample_imu(const Trajectory& traj, const ImuSimulationSpec& spec, std::uint64_t seed,
                     double gravity = kDefaultGravity);

/// Sweep ending at t_end. The LiDAR frame is body * extrinsic.
LidarScan sample_lidar_scan(const PlanarWorld& world, const Trajectory& traj, double t_end,
                            const LidarModel& model, std::uint64_t seed,
                            const Pose& extrinsic = Pose::identity(),
                            std::vector<std::size_t>* hit_facets = nullptr);

/// Scans generated on demand at t = (i + 1) / rate.
class SimulatedScans final : public ScanSource {
 public:
  SimulatedScans(std::shared_ptr<const PlanarWorld> world,
                 std::shared_ptr<const Trajectory> traj, LidarModel model, std::uint64_t seed,
                 Pose extrinsic = Pose::identity());
  std::size_t size() const override { return count_; }
  double timestamp(std::size_t i) const override;
  LidarScan load(std::size_t i) const override;

 private:
  std::shared_ptr<const PlanarWorld> world_;
  std::shared_ptr<const Trajectory> traj_;
  LidarModel model_;
  std::uint64_t seed_;
  Pose extrinsic_;
  std::size_t count_ = 0;
};

struct SimulationConfig {
  RoomSpec room;
  OvalLoopSpec trajectory;
  LidarModel lidar;
  ImuSimulationSpec imu;
  bool noise_free = false;
};

/// Full synthetic dataset: IMU, lazily generated scans, ground truth at the
/// IMU rate and the initial navigation state (true biases included).
Dataset simulate_dataset(const SimulationConfig& config, std::uint64_t seed,
                         const Pose& extrinsic = Pose::identity());

}  // namespace c2p
