#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2p/filter_state.hpp"
#include "c2p/geometry.hpp"
#include "c2p/imu_propagation.hpp"

namespace c2p {

/// One LiDAR sweep. `timestamp` is the end of the sweep; every point carries
/// its emission time relative to it (offsets in [-period, 0]).
struct LidarScan {
  double timestamp = 0.0;
  std::vector<Vec3> points;
  std::vector<double> offsets;
};

/// Random-access scan provider so that long sequences need not be resident.
class ScanSource {
 public:
  virtual ~ScanSource() = default;
  virtual std::size_t size() const = 0;
  virtual double timestamp(std::size_t index) const = 0;
  virtual LidarScan load(std::size_t index) const = 0;
};

class InMemoryScans final : public ScanSource {
 public:
  explicit InMemoryScans(std::vector<LidarScan> scans) : scans_(std::move(scans)) {}
  std::size_t size() const override { return scans_.size(); }
  double timestamp(std::size_t i) const override { return scans_.at(i).timestamp; }
  LidarScan load(std::size_t i) const override { return scans_.at(i); }

 private:
  std::vector<LidarScan> scans_;
};

struct GroundTruthSample {
  double timestamp = 0.0;
  Pose pose;
  Vec3 velocity = Vec3::Zero();
};

struct Dataset {
  std::vector<ImuSample> imu;
  std::shared_ptr<const ScanSource> scans;
  std::vector<GroundTruthSample> groundtruth;
  /// Navigation state at the first IMU sample, when known.
  std::optional<ImuNavState> initial;
  double trajectory_length = 0.0;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk layout:
//   imu.csv            t,gx,gy,gz,ax,ay,az
//   scans.csv          index,t
//   scans/NNNN.csv     x,y,z,dt        (dt relative to the scan timestamp)
//   groundtruth.csv    t,px,py,pz,qw,qx,qy,qz,vx,vy,vz
//   initial.csv        one state row (see state_csv_header), optional
//   meta.csv           key,value (trajectory_length)
void write_imu_csv(const std::filesystem::path& file, const std::vector<ImuSample>& imu);
std::vector<ImuSample> read_imu_csv(const std::filesystem::path& file);

void write_scan_csv(const std::filesystem::path& file, const LidarScan& scan);
LidarScan read_scan_csv(const std::filesystem::path& file, double timestamp);

void write_groundtruth_csv(const std::filesystem::path& file,
                           const std::vector<GroundTruthSample>& gt);
std::vector<GroundTruthSample> read_groundtruth_csv(const std::filesystem::path& file);

/// Writes a dataset directory, streaming scans from the source one at a time.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
/// Loads the IMU and ground truth eagerly; scans are read on demand.
Dataset load_dataset(const std::filesystem::path& dir);

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

using PoseCovariance = Eigen::Matrix<double, 6, 6>;

/// estimate.csv: t,px,py,pz,qw,qx,qy,qz
void write_trajectory_csv(const std::filesystem::path& file, const std::vector<TimedPose>& poses);
std::vector<TimedPose> read_trajectory_csv(const std::filesystem::path& file);

/// pose_covariance.csv: t followed by the 36 row-major entries in the
/// (dtheta, dp) chart.
void write_covariance_csv(const std::filesystem::path& file, const std::vector<double>& stamps,
                          const std::vector<PoseCovariance>& covs);
std::vector<PoseCovariance> read_covariance_csv(const std::filesystem::path& file,
                                                std::vector<double>* stamps = nullptr);

std::vector<TimedPose> to_timed_poses(const std::vector<GroundTruthSample>& gt);

}  // namespace c2p
