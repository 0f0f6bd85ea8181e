#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "c2p/measurement.hpp"
#include "support/oracles.hpp"

using namespace c2p;

namespace {

const PlanePatch kPlaneZ2 = oracle::make_plane(Vec3::UnitZ(), 2.0);

Mat4 gram(const std::vector<Vec3>& pts) { return accumulate_cluster(pts).matrix(); }

struct Scenario {
  FilterState state;
  Pose extrinsic;
  PlanePatch plane;
  std::vector<Vec3> local;  // in the LiDAR frame of clone 0
};

Scenario random_scenario(oracle::Rng& rng, double noise = 0.02) {
  Scenario s;
  s.state = oracle::random_filter_state(rng, 2);
  s.extrinsic = {oracle::random_rotation(rng, 0.3), oracle::uniform3(rng, -0.2, 0.2)};
  s.plane = oracle::make_plane(oracle::unit3(rng), oracle::uniform(rng, 1.0, 8.0));
  const Pose lidar = s.state.clones[0].pose.compose(s.extrinsic);
  const int m = static_cast<int>(oracle::uniform(rng, 5, 100));
  for (const Vec3& p : oracle::points_on_plane(rng, s.plane, m, 1.5, noise)) {
    s.local.push_back(lidar.inverse().transform(p));
  }
  return s;
}

Vec4 residual_at(const Scenario& s, const Pose& clone, const PlanePatch& plane) {
  const ClusterFactor f = cluster_factorize(gram(s.local));
  return cluster_to_plane_residual(f, clone.compose(s.extrinsic).to_transform(), plane);
}

}  // namespace

TEST_CASE("point_on_plane examples") {
  CHECK(point_on_plane(kPlaneZ2, HomogeneousTransform::identity(), Vec3(5, -3, 2)) == 0.0);
  CHECK(point_on_plane(kPlaneZ2, HomogeneousTransform::identity(), Vec3(0, 0, 3)) == 1.0);
  CHECK(point_on_plane(kPlaneZ2, HomogeneousTransform::translation(Vec3(0, 0, 1)), Vec3::Zero()) == -1.0);
}

TEST_CASE("cluster_factorize of the identity") {
  const ClusterFactor f = cluster_factorize(Mat4::Identity());
  CHECK(f.rank == 4);
  CHECK(f.L.isApprox(Mat4::Identity(), 1e-15));
}

TEST_CASE("cluster_factorize of a single point is rank one") {
  const ClusterFactor f = cluster_factorize(gram({Vec3(1, 2, 3)}));
  CHECK(f.rank == 1);
  CHECK(f.L.col(0).cwiseAbs().isApprox(Vec4(1, 2, 3, 1), 1e-12));
  CHECK(f.L.rightCols(3).isZero(0.0));
  CHECK((f.L * f.L.transpose() - gram({Vec3(1, 2, 3)})).norm() < 1e-12);
}

TEST_CASE("cluster_factorize of noise-free planar points") {
  oracle::Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const PlanePatch plane = oracle::make_plane(oracle::unit3(rng), oracle::uniform(rng, 0.5, 5));
    const Mat4 C = gram(oracle::points_on_plane(rng, plane, 50, 2.0));
    const ClusterFactor f = cluster_factorize(C);
    CHECK(f.rank <= 3);
    CHECK((f.L * f.L.transpose() - C).norm() < 1e-8 * C.norm());
    // the plane vector spans the null space of C
    Eigen::SelfAdjointEigenSolver<Mat4> es(C);
    CHECK(std::abs(es.eigenvectors().col(0).dot(plane.homogeneous().normalized())) ==
          doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("cluster_factorize rejects bad input") {
  Mat4 asym = Mat4::Identity();
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(cluster_factorize(asym), RejectedInput);
  Mat4 indefinite = Mat4::Identity();
  indefinite(3, 3) = -1.0;
  CHECK_THROWS_AS(cluster_factorize(indefinite), IndefiniteCluster);
}

TEST_CASE("compress_qr Gram identity") {
  const std::vector<Vec3> four{Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0, 0, 0)};
  QrCompression q = compress_qr(four);
  CHECK((q.R.transpose() * q.R - oracle::direct_gram(four)).norm() < 1e-10);

  oracle::Rng rng(52);
  std::vector<Vec3> pts(37);
  for (Vec3& p : pts) p = oracle::uniform3(rng, -4, 4);
  q = compress_qr(pts);
  CHECK(oracle::relative(q.R.transpose() * q.R, oracle::direct_gram(pts)) < 1e-9);
  CHECK(q.R.isUpperTriangular(1e-15));

  q = compress_qr(std::vector<Vec3>{Vec3(1, 2, 3)});
  CHECK(q.R.row(0).cwiseAbs().isApprox(Eigen::RowVector4d(1, 2, 3, 1), 1e-12));
  CHECK(q.R.bottomRows(3).isZero(0.0));
}

TEST_CASE("compressed residual of consistent geometry vanishes") {
  oracle::Rng rng(53);
  const Pose T = oracle::random_pose(rng);
  const PlanePatch plane = oracle::make_plane(oracle::unit3(rng), 4.0);
  std::vector<Vec3> local;
  for (const Vec3& p : oracle::points_on_plane(rng, plane, 60, 2.0)) local.push_back(T.inverse().transform(p));
  const Vec4 z = cluster_to_plane_residual(cluster_factorize(gram(local)), T.to_transform(), plane);
  CHECK(z.norm() < 1e-9 * 5.0);
}

TEST_CASE("compressed residual keeps the sum of squared point residuals") {
  oracle::Rng rng(54);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose T = oracle::random_pose(rng);
    const PlanePatch plane = oracle::make_plane(oracle::unit3(rng), oracle::uniform(rng, 1, 6));
    std::vector<Vec3> local;
    for (const Vec3& p : oracle::points_on_plane(rng, plane, 200, 2.0, 0.05)) {
      local.push_back(T.inverse().transform(p));
    }
    const Pose perturbed{T.rotation * Rotation::exp(oracle::gaussian3(rng, 0.01)),
                         T.position + oracle::gaussian3(rng, 0.05)};
    double sum = 0.0;
    for (const Vec3& p : local) sum += std::pow(point_on_plane(plane, perturbed.to_transform(), p), 2);
    const Vec4 z = cluster_to_plane_residual(cluster_factorize(gram(local)), perturbed.to_transform(), plane);
    CHECK(std::abs(z.squaredNorm() - sum) < 1e-8 * sum);

    const QrCompression q = compress_qr(local);
    Eigen::VectorXd per_point(static_cast<Eigen::Index>(local.size()));
    for (std::size_t j = 0; j < local.size(); ++j) {
      per_point(static_cast<Eigen::Index>(j)) = point_on_plane(plane, perturbed.to_transform(), local[j]);
    }
    CHECK(std::abs(q.rotate(per_point).squaredNorm() - sum) < 1e-8 * sum);
  }
}

TEST_CASE("single point cluster residual equals the point residual") {
  const Vec3 p(0.3, -0.2, 2.7);
  const Vec4 z = cluster_to_plane_residual(cluster_factorize(gram({p})), HomogeneousTransform::identity(), kPlaneZ2);
  CHECK(z.norm() == doctest::Approx(std::abs(point_on_plane(kPlaneZ2, HomogeneousTransform::identity(), p))));
}

TEST_CASE("translation rows follow the plane normal") {
  FilterState s;
  s = augment_clone(s, 0.0, 1);
  const StateLayout layout(s);
  std::vector<Vec3> pts{Vec3(0, 0, 2), Vec3(1, 0, 2), Vec3(0, 1, 2), Vec3(1, 1, 2.1)};
  const ClusterJacobians J =
      cluster_to_plane_jacobians(cluster_factorize(gram(pts)), s.clones[0].pose, Pose::identity(), kPlaneZ2, layout, 1);
  const Eigen::MatrixXd Hp = J.H_x.block(0, layout.offset_of(1) + 3, 4, 3);
  CHECK(Hp.col(0).isZero(1e-15));
  CHECK(Hp.col(1).isZero(1e-15));
  CHECK_FALSE(Hp.col(2).isZero(1e-6));
}

TEST_CASE("state and plane Jacobians match central finite differences") {
  oracle::Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const Scenario s = random_scenario(rng);
    const StateLayout layout(s.state);
    const FrameId frame = s.state.clones[0].frame_id;
    const Pose clone = s.state.clones[0].pose;
    const CompressedMeasurement m = make_cluster_measurement(accumulate_cluster(s.local), s.state, layout, frame,
                                                             s.extrinsic, s.plane);
    const Eigen::MatrixXd H_pose = oracle::central_difference(
        [&](const Eigen::VectorXd& e) -> Eigen::VectorXd {
          const Pose c{clone.rotation.boxplus(e.head<3>()), clone.position + e.tail<3>()};
          return residual_at(s, c, s.plane);
        },
        6);
    const Eigen::MatrixXd H_plane = oracle::central_difference(
        [&](const Eigen::VectorXd& e) -> Eigen::VectorXd {
          return residual_at(s, clone, oracle::plane_from_closest_point(s.plane.closest_point() + e));
        },
        3);
    const int off = layout.offset_of(frame);
    CHECK(oracle::relative(m.H_x.block(0, off, 4, 6), H_pose) < 1e-5);
    CHECK(m.H_x.leftCols(off).isZero(0.0));
    CHECK(m.H_x.rightCols(m.H_x.cols() - off - 6).isZero(0.0));
    CHECK(oracle::relative(m.H_pi, H_plane) < 1e-5);
  }
}

TEST_CASE("planes through the origin use a tangent chart") {
  oracle::Rng rng(56);
  FilterState s = augment_clone(FilterState{}, 0.0, 1);
  const PlanePatch plane = oracle::make_plane(Vec3(0.2, 0.1, 1.0), 0.0);
  const PlaneJacobianStructure st = plane_measurement_structure(s.clones[0].pose, Pose::identity(), plane);
  CHECK(st.tangent_chart);
  CHECK(st.plane.col(2)(3) == -1.0);
  // the two tangent columns rotate the normal about the origin
  std::vector<Vec3> pts = oracle::points_on_plane(rng, plane, 30, 2.0, 0.01);
  const ClusterFactor f = cluster_factorize(gram(pts));
  const ClusterJacobians J = cluster_to_plane_jacobians(f, s.clones[0].pose, Pose::identity(), plane, StateLayout(s), 1);
  CHECK(J.tangent_chart);
  CHECK(J.H_pi.allFinite());
}

TEST_CASE("point rows and the compressed rows carry the same information") {
  oracle::Rng rng(57);
  for (int trial = 0; trial < 20; ++trial) {
    const Scenario s = random_scenario(rng);
    const StateLayout layout(s.state);
    const FrameId frame = s.state.clones[0].frame_id;
    const CompressedMeasurement c = make_cluster_measurement(accumulate_cluster(s.local), s.state, layout, frame,
                                                             s.extrinsic, s.plane);
    const PointMeasurements p = make_point_measurements(s.local, s.state, layout, frame, s.extrinsic, s.plane);
    const oracle::PointRows ref = oracle::point_rows(s.local, s.state.clones[0].pose, s.extrinsic, s.plane,
                                                     layout.dim(), layout.offset_of(frame));
    CHECK(oracle::relative(p.H_x, ref.H_x) < 1e-10);
    CHECK(oracle::relative(p.H_pi, ref.H_pi) < 1e-10);
    CHECK(oracle::relative(p.residual, ref.residual) < 1e-10);
    CHECK(oracle::relative(c.H_x.transpose() * c.H_x, ref.H_x.transpose() * ref.H_x) < 1e-9);
    CHECK(oracle::relative(c.H_x.transpose() * c.residual, ref.H_x.transpose() * ref.residual) < 1e-9);
  }
}

TEST_CASE("a missing clone is reported") {
  oracle::Rng rng(58);
  const FilterState s = oracle::random_filter_state(rng, 2);
  CHECK_THROWS_AS(StateLayout(s).offset_of(99), MissingClone);
}
