#include <doctest.h>

#include <sstream>

#include <Eigen/Eigenvalues>

#include "c2p/filter_state.hpp"
#include "support/oracles.hpp"

using namespace c2p;

namespace {

FilterState identity_state() {
  FilterState s;
  s.nav.orientation = Rotation::exp(Vec3(0.1, -0.2, 0.3));
  s.nav.position = Vec3(1, 2, 3);
  s.covariance = Eigen::MatrixXd::Identity(kImuErrorDim, kImuErrorDim);
  return s;
}

double min_eig(const Eigen::MatrixXd& P) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff();
}

int rank_of(const Eigen::MatrixXd& P) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  const double tol = 1e-9 * es.eigenvalues().cwiseAbs().maxCoeff();
  return static_cast<int>((es.eigenvalues().array() > tol).count());
}

}  // namespace

TEST_CASE("cloning an identity covariance") {
  const FilterState s = augment_clone(identity_state(), 0.5, 7);
  REQUIRE(s.dim() == 21);
  REQUIRE(s.clones.size() == 1);
  CHECK(s.clones[0].frame_id == 7);
  CHECK(s.covariance.bottomRightCorner(6, 6).isApprox(Eigen::MatrixXd::Identity(6, 6)));
  const Eigen::MatrixXd cross = s.covariance.topRightCorner(15, 6);
  CHECK(cross == Eigen::MatrixXd::Identity(15, 15).leftCols(6));
  s.audit();
}

TEST_CASE("cloning twice at the same pose gives identical correlated blocks") {
  FilterState s = augment_clone(identity_state(), 0.5, 1);
  s = augment_clone(s, 0.6, 2);
  const Eigen::MatrixXd a = s.covariance.block(15, 15, 6, 6);
  const Eigen::MatrixXd b = s.covariance.block(21, 21, 6, 6);
  const Eigen::MatrixXd ab = s.covariance.block(15, 21, 6, 6);
  CHECK(a == b);
  CHECK(a == ab);
}

TEST_CASE("cloning preserves PSD and rank") {
  oracle::Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    FilterState s = identity_state();
    s.covariance = oracle::random_psd(rng, kImuErrorDim);
    const FilterState c = augment_clone(s, 1.0, 1);
    CHECK(min_eig(c.covariance) >= -1e-10);
    CHECK(rank_of(c.covariance) == rank_of(s.covariance));
  }
}

TEST_CASE("marginalizing the only clone restores the IMU covariance") {
  oracle::Rng rng(22);
  FilterState s = identity_state();
  s.covariance = oracle::random_psd(rng, kImuErrorDim, 1e-3);
  const FilterState back = marginalize_oldest(augment_clone(s, 1.0, 1));
  CHECK(back.dim() == kImuErrorDim);
  CHECK(back.covariance == s.covariance);
}

TEST_CASE("marginalizing keeps the remaining submatrix and sub-state NEES") {
  oracle::Rng rng(23);
  FilterState s = oracle::random_filter_state(rng, 10);
  const FilterState m = marginalize_oldest(s);
  REQUIRE(m.clones.size() == 9);
  Eigen::MatrixXd expected(m.dim(), m.dim());
  expected << s.covariance.topLeftCorner(15, 15), s.covariance.topRightCorner(15, 54),
      s.covariance.bottomLeftCorner(54, 15), s.covariance.bottomRightCorner(54, 54);
  CHECK(m.covariance == expected);
  CHECK(m.clones.front().frame_id == s.clones[1].frame_id);

  const Eigen::VectorXd e = oracle::gaussian3(rng).replicate(m.dim() / 3, 1);
  const double nees = e.dot(expected.ldlt().solve(e));
  CHECK(std::abs(nees - e.dot(m.covariance.ldlt().solve(e))) < 1e-9 * nees);
}

TEST_CASE("zero correction leaves the state unchanged") {
  oracle::Rng rng(24);
  const FilterState s = oracle::random_filter_state(rng, 3);
  const FilterState c = apply_correction(s, Eigen::VectorXd::Zero(s.dim()));
  CHECK(c.nav.position == s.nav.position);
  CHECK(c.nav.orientation.boxminus(s.nav.orientation).norm() < 1e-15);
  for (std::size_t i = 0; i < s.clones.size(); ++i) {
    CHECK(c.clones[i].pose.position == s.clones[i].pose.position);
  }
}

TEST_CASE("a clone position correction is local to that clone") {
  oracle::Rng rng(25);
  const FilterState s = oracle::random_filter_state(rng, 3);
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(s.dim());
  dx(FilterState::clone_offset(1) + 3) = 1.0;
  const FilterState c = apply_correction(s, dx);
  CHECK((c.clones[1].pose.position - s.clones[1].pose.position - Vec3::UnitX()).norm() < 1e-15);
  CHECK(c.clones[0].pose.position == s.clones[0].pose.position);
  CHECK(c.clones[2].pose.position == s.clones[2].pose.position);
  CHECK(c.nav.position == s.nav.position);
  CHECK(c.nav.velocity == s.nav.velocity);
}

TEST_CASE("small rotation corrections retract to second order") {
  oracle::Rng rng(26);
  for (int i = 0; i < 50; ++i) {
    const FilterState s = oracle::random_filter_state(rng, 1);
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(s.dim());
    const Vec3 dtheta = oracle::unit3(rng) * 1e-3;
    dx.segment<3>(kThetaIdx) = dtheta;
    const FilterState c = apply_correction(s, dx);
    const Vec3 err = s.nav.orientation.boxminus(c.nav.orientation) - dtheta;
    CHECK(err.norm() < dtheta.squaredNorm());
  }
}

TEST_CASE("audit rejects asymmetric covariance and disordered clones") {
  oracle::Rng rng(27);
  FilterState s = oracle::random_filter_state(rng, 2);
  s.audit();
  FilterState bad = s;
  bad.covariance(0, 1) += 1.0;
  CHECK_THROWS_AS(bad.audit(), std::logic_error);
  bad = s;
  std::swap(bad.clones[0], bad.clones[1]);
  CHECK_THROWS_AS(bad.audit(), std::logic_error);
}

TEST_CASE("state rows carry the header's column count") {
  oracle::Rng rng(28);
  const FilterState s = oracle::random_filter_state(rng, 0);
  for (bool diag : {false, true}) {
    std::ostringstream os;
    write_state_row(os, s, diag);
    const std::string header = state_csv_header(diag);
    const auto count = [](const std::string& x) { return std::count(x.begin(), x.end(), ','); };
    CHECK(count(os.str()) == count(header));
  }
}
