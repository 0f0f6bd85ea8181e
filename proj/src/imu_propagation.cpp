#include "c2p/imu_propagation.hpp"

#include <cmath>
#include <string>

namespace c2p {

ImuSample ImuSample::interpolate(const ImuSample& a, const ImuSample& b, double t) {
  const double span = b.timestamp - a.timestamp;
  const double alpha = span > 0.0 ? (t - a.timestamp) / span : 0.0;
  return {t, (1.0 - alpha) * a.gyro + alpha * b.gyro, (1.0 - alpha) * a.accel + alpha * b.accel};
}

ImuSample ImuSample::midpoint(const ImuSample& a, const ImuSample& b) {
  return {a.timestamp, 0.5 * (a.gyro + b.gyro), 0.5 * (a.accel + b.accel)};
}

void ImuNoiseParams::validate() const {
  if (gyro_noise < 0 || accel_noise < 0 || gyro_random_walk < 0 || accel_random_walk < 0 ||
      gravity < 0) {
    throw RejectedInput("IMU noise parameters must be non-negative");
  }
}

ImuNavState propagate_mean(const ImuNavState& nav, const ImuSample& sample, double dt,
                           double gravity) {
  if (!(dt > 0.0)) throw RejectedInput("propagation step must be positive");
  const Vec3 w = sample.gyro - nav.gyro_bias;
  const Vec3 a = sample.accel - nav.accel_bias;
  const Rotation half = Rotation::exp(0.5 * dt * w);
  const Vec3 acc_world = nav.orientation * (half * a) - gravity * Vec3::UnitZ();

  ImuNavState out = nav;
  out.timestamp = nav.timestamp + dt;
  out.orientation = nav.orientation * Rotation::exp(dt * w);
  out.position = nav.position + nav.velocity * dt + 0.5 * acc_world * dt * dt;
  out.velocity = nav.velocity + acc_world * dt;
  return out;
}

Eigen::MatrixXd propagate_covariance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Phi,
                                     const Eigen::MatrixXd& Q) {
  if (P.rows() != P.cols()) throw RejectedInput("covariance must be square");
  if (Phi.rows() != Phi.cols() || Q.rows() != Q.cols() || Phi.rows() != Q.rows()) {
    throw RejectedInput("transition and noise matrices must be square and equally sized");
  }
  const Eigen::Index n = P.rows();
  if (Phi.rows() == n) {
    Eigen::MatrixXd out = Phi * P * Phi.transpose() + Q;
    symmetrize(out);
    return out;
  }
  if (Phi.rows() != kImuErrorDim || n < kImuErrorDim) {
    throw RejectedInput("transition dimension " + std::to_string(Phi.rows()) +
                        " incompatible with covariance dimension " + std::to_string(n));
  }
  // Full-state transition is blockdiag(Phi_imu, I): only IMU rows/cols change.
  const int I = kImuErrorDim;
  const Eigen::Index rest = n - I;
  Eigen::MatrixXd out(n, n);
  out.topLeftCorner(I, I) = Phi * P.topLeftCorner(I, I) * Phi.transpose() + Q;
  if (rest > 0) {
    out.topRightCorner(I, rest) = Phi * P.topRightCorner(I, rest);
    out.bottomLeftCorner(rest, I) = out.topRightCorner(I, rest).transpose();
    out.bottomRightCorner(rest, rest) = P.bottomRightCorner(rest, rest);
  }
  symmetrize(out);
  return out;
}

TransitionNoise compute_phi_and_q(const ImuNavState& nav, const ImuSample& sample,
                                  const ImuNoiseParams& noise, double dt) {
  if (!(dt > 0.0)) throw RejectedInput("propagation step must be positive");
  const Vec3 w = sample.gyro - nav.gyro_bias;
  const Vec3 a = sample.accel - nav.accel_bias;
  const Mat3 R = nav.orientation.matrix();
  const Mat3 R_half = Rotation::exp(0.5 * dt * w).matrix();
  const Mat3 R_step = Rotation::exp(dt * w).matrix();

  // Sensitivities of the world-frame acceleration.
  const Mat3 A_theta = -R * skew(R_half * a);
  const Mat3 A_bg = R * R_half * skew(a) * right_jacobian(0.5 * dt * w) * (0.5 * dt);
  const Mat3 A_ba = -R * R_half;

  TransitionNoise tn;
  Mat15& F = tn.phi;
  F.setIdentity();
  F.block<3, 3>(kThetaIdx, kThetaIdx) = R_step.transpose();
  F.block<3, 3>(kThetaIdx, kBgIdx) = -right_jacobian(dt * w) * dt;

  F.block<3, 3>(kPosIdx, kThetaIdx) = 0.5 * dt * dt * A_theta;
  F.block<3, 3>(kPosIdx, kVelIdx) = Mat3::Identity() * dt;
  F.block<3, 3>(kPosIdx, kBgIdx) = 0.5 * dt * dt * A_bg;
  F.block<3, 3>(kPosIdx, kBaIdx) = 0.5 * dt * dt * A_ba;

  F.block<3, 3>(kVelIdx, kThetaIdx) = dt * A_theta;
  F.block<3, 3>(kVelIdx, kBgIdx) = dt * A_bg;
  F.block<3, 3>(kVelIdx, kBaIdx) = dt * A_ba;

  // White measurement noise enters exactly like a bias error held over the
  // step, with discrete variance sigma^2 / dt.
  Eigen::Matrix<double, 15, 3> G_gyro = Eigen::Matrix<double, 15, 3>::Zero();
  Eigen::Matrix<double, 15, 3> G_accel = Eigen::Matrix<double, 15, 3>::Zero();
  G_gyro.topRows<9>() = F.block<9, 3>(0, kBgIdx);
  G_accel.topRows<9>() = F.block<9, 3>(0, kBaIdx);

  Mat15& Q = tn.q;
  Q = (noise.gyro_noise * noise.gyro_noise / dt) * G_gyro * G_gyro.transpose() +
      (noise.accel_noise * noise.accel_noise / dt) * G_accel * G_accel.transpose();
  Q.block<3, 3>(kBgIdx, kBgIdx) +=
      Mat3::Identity() * noise.gyro_random_walk * noise.gyro_random_walk * dt;
  Q.block<3, 3>(kBaIdx, kBaIdx) +=
      Mat3::Identity() * noise.accel_random_walk * noise.accel_random_walk * dt;
  Q = 0.5 * (Q + Q.transpose()).eval();
  return tn;
}

void propagate_state(FilterState& state, const ImuSample& sample, const ImuNoiseParams& noise,
                     double dt) {
  const TransitionNoise tn = compute_phi_and_q(state.nav, sample, noise, dt);
  state.nav = propagate_mean(state.nav, sample, dt, noise.gravity);
  state.covariance = propagate_covariance(state.covariance, tn.phi, tn.q);
}

}  // namespace c2p
