#pragma once

#include <Eigen/Core>

#include "c2p/filter_state.hpp"
#include "c2p/geometry.hpp"

namespace c2p {

inline constexpr double kDefaultGravity = 9.81;

struct ImuSample {
  double timestamp = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force

  /// Linear interpolation of the measurements at time t.
  static ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t);
  /// Average of two samples, stamped at the earlier one.
  static ImuSample midpoint(const ImuSample& a, const ImuSample& b);
};

/// Continuous-time noise densities (white noise in unit/sqrt(Hz), random
/// walks in unit/s/sqrt(Hz)) plus gravity magnitude.
struct ImuNoiseParams {
  double gyro_noise = 0.005;
  double accel_noise = 0.01;
  double gyro_random_walk = 4e-6;
  double accel_random_walk = 2e-4;
  double gravity = kDefaultGravity;

  void validate() const;
};

using Mat15 = Eigen::Matrix<double, 15, 15>;

/// One integration step with bias-corrected rates held over dt. The
/// specific force is rotated with the mid-step attitude.
ImuNavState propagate_mean(const ImuNavState& nav, const ImuSample& sample, double dt,
                           double gravity = kDefaultGravity);

/// P <- Phi P Phi^T + Q. Phi/Q may be full-state matrices, or 15x15 IMU
/// blocks which are then applied to the IMU rows/columns only.
Eigen::MatrixXd propagate_covariance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Phi,
                                     const Eigen::MatrixXd& Q);

struct TransitionNoise {
  Mat15 phi;
  Mat15 q;
};

/// Error-state transition and discrete noise of propagate_mean for the same
/// (nav, sample, dt).
TransitionNoise compute_phi_and_q(const ImuNavState& nav, const ImuSample& sample,
                                  const ImuNoiseParams& noise, double dt);

/// Mean and covariance step applied to a full filter state.
void propagate_state(FilterState& state, const ImuSample& sample, const ImuNoiseParams& noise,
                     double dt);

}  // namespace c2p
