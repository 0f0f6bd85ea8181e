#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "c2p/imu_propagation.hpp"
#include "c2p/simulator.hpp"
#include "support/oracles.hpp"

using namespace c2p;

namespace {

ImuSample sample_of(const Vec3& gyro, const Vec3& accel) {
  ImuSample s;
  s.gyro = gyro;
  s.accel = accel;
  return s;
}

}  // namespace

TEST_CASE("rest with gravity compensation leaves the state unchanged") {
  ImuNavState nav;
  nav.position = Vec3(1, 2, 3);
  const ImuNavState out = propagate_mean(nav, sample_of(Vec3::Zero(), Vec3(0, 0, 9.81)), 0.01, 9.81);
  CHECK(out.timestamp == doctest::Approx(0.01));
  CHECK((out.position - nav.position).norm() < 1e-15);
  CHECK(out.velocity.norm() < 1e-15);
  CHECK(out.orientation.log().norm() < 1e-15);
}

TEST_CASE("free fall for 0.1 s") {
  const ImuNavState out = propagate_mean({}, sample_of(Vec3::Zero(), Vec3::Zero()), 0.1, 9.81);
  CHECK((out.velocity - Vec3(0, 0, -0.981)).norm() < 1e-12);
  CHECK((out.position - Vec3(0, 0, -0.04905)).norm() < 1e-12);
}

TEST_CASE("constant yaw rate integrates to the closed form") {
  ImuNavState nav;
  for (int i = 0; i < 1000; ++i) {
    nav = propagate_mean(nav, sample_of(Vec3(0, 0, 1), Vec3(0, 0, 9.81)), 0.001, 9.81);
  }
  CHECK((nav.orientation.log() - Vec3(0, 0, 1)).norm() < 1e-6);
}

TEST_CASE("covariance propagation examples") {
  oracle::Rng rng(31);
  const Eigen::MatrixXd P = oracle::random_psd(rng, 15);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(15, 15);
  CHECK(propagate_covariance(P, I, Eigen::MatrixXd::Zero(15, 15)).isApprox(P, 1e-15));
  CHECK(propagate_covariance(Eigen::MatrixXd::Zero(15, 15), I, 0.3 * I).isApprox(0.3 * I, 1e-15));
  for (int i = 0; i < 30; ++i) {
    const Eigen::MatrixXd A = oracle::random_psd(rng, 15);
    Eigen::MatrixXd Phi = I + 0.1 * Eigen::MatrixXd::Random(15, 15);
    const Eigen::MatrixXd out = propagate_covariance(A, Phi, oracle::random_psd(rng, 15));
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(out).eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("covariance propagation applies IMU blocks to the IMU rows of a full state") {
  oracle::Rng rng(32);
  FilterState s = oracle::random_filter_state(rng, 2);
  const ImuSample m = sample_of(oracle::gaussian3(rng, 0.3), Vec3(0.2, -0.1, 9.7));
  const TransitionNoise tn = compute_phi_and_q(s.nav, m, ImuNoiseParams{}, 0.004);
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(s.dim(), s.dim());
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(s.dim(), s.dim());
  Phi.topLeftCorner(15, 15) = tn.phi;
  Q.topLeftCorner(15, 15) = tn.q;
  const Eigen::MatrixXd full = propagate_covariance(s.covariance, Phi, Q);
  CHECK(oracle::relative(propagate_covariance(s.covariance, tn.phi, tn.q), full) < 1e-13);
}

TEST_CASE("zero motion transition couples velocity into position") {
  const TransitionNoise tn =
      compute_phi_and_q({}, sample_of(Vec3::Zero(), Vec3(0, 0, 9.81)), ImuNoiseParams{}, 0.01);
  CHECK(tn.phi.block<3, 3>(kPosIdx, kVelIdx).isApprox(0.01 * Mat3::Identity(), 1e-15));
}

TEST_CASE("zero noise gives zero process noise") {
  ImuNoiseParams quiet;
  quiet.gyro_noise = quiet.accel_noise = quiet.gyro_random_walk = quiet.accel_random_walk = 0.0;
  oracle::Rng rng(33);
  const TransitionNoise tn =
      compute_phi_and_q(oracle::random_nav(rng), sample_of(Vec3(0.1, 0.2, 0.3), Vec3(1, 2, 9)), quiet, 0.004);
  CHECK(tn.q.isZero(0.0));
}

TEST_CASE("process noise is symmetric PSD and grows with dt") {
  oracle::Rng rng(34);
  const ImuNavState nav = oracle::random_nav(rng);
  const ImuSample m = sample_of(Vec3(0.1, 0.2, 0.3), Vec3(1, 2, 9));
  const Mat15 q1 = compute_phi_and_q(nav, m, ImuNoiseParams{}, 0.004).q;
  const Mat15 q2 = compute_phi_and_q(nav, m, ImuNoiseParams{}, 0.008).q;
  CHECK((q1 - q1.transpose()).norm() < 1e-18);
  CHECK(Eigen::SelfAdjointEigenSolver<Mat15>(q1).eigenvalues().minCoeff() >= -1e-18);
  CHECK(q2.trace() > q1.trace());
}

TEST_CASE("transition matches central finite differences") {
  oracle::Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const ImuNavState nav = oracle::random_nav(rng);
    const ImuSample m = sample_of(oracle::gaussian3(rng, 0.5), oracle::gaussian3(rng, 2.0) + Vec3(0, 0, 9.81));
    const double dt = oracle::uniform(rng, 0.001, 0.01);
    const ImuNavState base = propagate_mean(nav, m, dt);
    const Eigen::MatrixXd fd = oracle::central_difference(
        [&](const Eigen::VectorXd& e) -> Eigen::VectorXd {
          return oracle::nav_error(base, propagate_mean(oracle::nav_retract(nav, e), m, dt));
        },
        15);
    const Mat15 phi = compute_phi_and_q(nav, m, ImuNoiseParams{}, dt).phi;
    CHECK(oracle::relative(phi, fd) < 1e-5);
  }
}

TEST_CASE("negative noise parameters and non-positive steps are rejected") {
  ImuNoiseParams p;
  p.gyro_noise = -1.0;
  CHECK_THROWS_AS(p.validate(), RejectedInput);
  CHECK_THROWS_AS(propagate_mean({}, {}, 0.0), RejectedInput);
}

TEST_CASE("noise-free IMU dead reckoning follows a level oval for 60 s") {
  OvalLoopSpec spec;
  spec.tilt_amplitude = 0.0;
  spec.target_length = 90.0;
  spec.loops = 2.5;
  const OvalLoopTrajectory traj(spec);
  ImuSimulationSpec imu;
  imu.noise.gyro_noise = imu.noise.accel_noise = 0.0;
  imu.noise.gyro_random_walk = imu.noise.accel_random_walk = 0.0;
  imu.gyro_bias_init = imu.accel_bias_init = 0.0;
  const ImuStream stream = sample_imu(traj, imu, 3);

  const TrajectoryPoint start = traj.evaluate(0.0);
  ImuNavState nav;
  nav.orientation = start.pose.rotation;
  nav.position = start.pose.position;
  nav.velocity = start.velocity;
  std::size_t i = 0;
  for (; i + 1 < stream.samples.size() && stream.samples[i + 1].timestamp <= 60.0 + 1e-9; ++i) {
    const ImuSample& a = stream.samples[i];
    const ImuSample& b = stream.samples[i + 1];
    nav = propagate_mean(nav, ImuSample::midpoint(a, b), b.timestamp - a.timestamp);
  }
  const TrajectoryPoint end = traj.evaluate(stream.samples[i].timestamp);
  CHECK(stream.samples[i].timestamp == doctest::Approx(60.0));
  CHECK((nav.position - end.pose.position).norm() < 1e-4);
}
