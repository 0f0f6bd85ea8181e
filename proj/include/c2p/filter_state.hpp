#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <stdexcept>

#include <Eigen/Core>

#include "c2p/geometry.hpp"

namespace c2p {

using FrameId = std::uint64_t;

/// Thrown when an operation receives arguments violating its contract.
class RejectedInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ImuNavState {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  Rotation orientation;
  Vec3 velocity = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();

  Pose pose() const { return {orientation, position}; }
};

struct Clone {
  double timestamp = 0.0;
  FrameId frame_id = 0;
  Pose pose;
};

// Error-state layout. The IMU block comes first so that cloning appends
// rows/columns at the end:
//   [dtheta, dp, dv, dbg, dba | clone_0 (dtheta, dp) | clone_1 | ...]
inline constexpr int kImuErrorDim = 15;
inline constexpr int kCloneErrorDim = 6;
inline constexpr int kThetaIdx = 0;
inline constexpr int kPosIdx = 3;
inline constexpr int kVelIdx = 6;
inline constexpr int kBgIdx = 9;
inline constexpr int kBaIdx = 12;

struct FilterState {
  ImuNavState nav;
  std::deque<Clone> clones;
  Eigen::MatrixXd covariance = Eigen::MatrixXd::Identity(kImuErrorDim, kImuErrorDim);

  int dim() const { return kImuErrorDim + kCloneErrorDim * static_cast<int>(clones.size()); }
  static int clone_offset(std::size_t index) {
    return kImuErrorDim + kCloneErrorDim * static_cast<int>(index);
  }
  /// Index of the clone with the given frame id; throws std::out_of_range.
  std::size_t clone_index(FrameId id) const;

  /// 6x6 covariance of the current IMU pose in the (dtheta, dp) chart.
  Eigen::Matrix<double, 6, 6> pose_covariance() const {
    return covariance.topLeftCorner<6, 6>();
  }

  double symmetry_error() const;
  double min_eigenvalue() const;
  /// Throws std::logic_error if dimension, symmetry or clone ordering is broken.
  void audit(double symmetry_tol = 1e-9, double psd_tol = -1e-8) const;
};

/// Stochastic cloning of the current IMU pose at time t.
FilterState augment_clone(const FilterState& state, double t, FrameId frame_id = 0);

/// Drops the oldest clone together with its rows/columns.
FilterState marginalize_oldest(const FilterState& state);

/// Retracts an error-state correction onto the nominal state.
FilterState apply_correction(const FilterState& state, const Eigen::VectorXd& dx);

void symmetrize(Eigen::MatrixXd& P);

/// CSV row: t, p(3), q(4, w first), v(3), bg(3), ba(3)[, covariance diagonal].
void write_state_row(std::ostream& os, const FilterState& state, bool with_cov_diagonal);
const char* state_csv_header(bool with_cov_diagonal);

}  // namespace c2p
