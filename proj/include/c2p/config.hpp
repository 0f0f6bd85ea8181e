#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "c2p/geometry.hpp"
#include "c2p/imu_propagation.hpp"
#include "c2p/simulator.hpp"
#include "c2p/voxel_map.hpp"

namespace c2p {

enum class MeasurementMode { kCluster, kPoint };

/// How window points are turned into updates.
///   kConsume: once the window is full, every plane seen by the oldest frame
///     is used with the points of all window frames in its cell; those points
///     are then retired and the oldest clone is marginalized. Each point
///     enters exactly one update.
///   kSliding: every scan updates with all points of all window frames, so
///     points are reused up to window_size - 1 times.
///   kChunked: window_size scans are collected, used in one update and then
///     all marginalized.
enum class UpdatePolicy { kConsume, kSliding, kChunked };

struct PipelineConfig {
  VoxelMapParams voxel;
  int window_size = 10;
  double lidar_sigma = 0.03;
  /// Planes with a point beyond outlier_sigma * lidar_sigma are split further
  /// (mixed surfaces); 0 disables.
  double outlier_sigma = 3.0;
  /// Per-plane noise variance is max(lidar_sigma^2, unbiased fit residual
  /// variance) when set.
  bool fit_variance_floor = true;
  ImuNoiseParams imu;
  Vec3 extrinsic_rotvec = Vec3::Zero();  // LiDAR-to-IMU rotation, axis-angle
  Vec3 extrinsic_translation = Vec3::Zero();
  MeasurementMode mode = MeasurementMode::kCluster;
  UpdatePolicy policy = UpdatePolicy::kConsume;
  int threads = 1;
  bool chi2_gate = false;
  double chi2_probability = 0.95;  // per-plane gate quantile
  int min_observations = 2;
  // Initial standard deviations.
  double init_rotation_sigma = 0.01;
  double init_position_sigma = 0.01;
  double init_velocity_sigma = 0.01;
  double init_gyro_bias_sigma = 0.01;
  double init_accel_bias_sigma = 0.1;
  bool init_biases_from_dataset = false;
  double divergence_trace = 1e6;

  Pose extrinsic() const { return {Rotation::exp(extrinsic_rotvec), extrinsic_translation}; }
  void validate() const;
};

struct AppConfig {
  PipelineConfig pipeline;
  SimulationConfig simulation;
  std::uint64_t seed = 1;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Line-oriented `key = value` text; '#' starts a comment. Unknown keys and
/// malformed values raise ConfigError naming the line. Missing keys keep
/// their defaults.
AppConfig parse_config(std::istream& in, const std::string& source = "<config>");
AppConfig load_config(const std::filesystem::path& file);
/// Writes every key; parse_config(write_config(c)) == c bit for bit.
void write_config(std::ostream& out, const AppConfig& config);

bool operator==(const AppConfig& a, const AppConfig& b);

const char* to_string(MeasurementMode m);
const char* to_string(UpdatePolicy p);

}  // namespace c2p
