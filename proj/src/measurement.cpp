#include "c2p/measurement.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace c2p {

namespace {

constexpr double kRankTol = 1e-12;
constexpr double kIndefiniteTol = 1e-6;
constexpr double kClosestPointMinDistance = 1e-6;

Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& n) {
  Eigen::Index k;
  n.cwiseAbs().minCoeff(&k);
  const Vec3 e = Vec3::Unit(k);
  const Vec3 b1 = n.cross(e).normalized();
  const Vec3 b2 = n.cross(b1);
  Eigen::Matrix<double, 3, 2> B;
  B << b1, b2;
  return B;
}

}  // namespace

double point_on_plane(const PlanePatch& plane, const HomogeneousTransform& T, const Vec3& p_local) {
  return plane.homogeneous().dot(T.matrix() * p_local.homogeneous());
}

ClusterFactor cluster_factorize(const Mat4& C) {
  const double scale = C.cwiseAbs().maxCoeff();
  if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + scale)) {
    throw RejectedInput("cluster matrix is not symmetric");
  }
  const double trace = std::max(C.trace(), 0.0);
  const double tol = kRankTol * trace;

  Mat4 A = 0.5 * (C + C.transpose());
  Mat4 Lp = Mat4::Zero();
  std::array<int, 4> perm{0, 1, 2, 3};
  int k = 0;
  for (; k < 4; ++k) {
    Eigen::Index j;
    A.diagonal().tail(4 - k).maxCoeff(&j);
    j += k;
    if (!(A(j, j) > tol)) break;
    if (j != k) {
      A.row(k).swap(A.row(j));
      A.col(k).swap(A.col(j));
      Lp.row(k).swap(Lp.row(j));
      std::swap(perm[k], perm[j]);
    }
    const double pivot = std::sqrt(A(k, k));
    Lp(k, k) = pivot;
    for (int i = k + 1; i < 4; ++i) Lp(i, k) = A(i, k) / pivot;
    for (int i = k + 1; i < 4; ++i) {
      for (int l = k + 1; l < 4; ++l) A(i, l) -= Lp(i, k) * Lp(l, k);
    }
  }

  if (k < 4) {
    const auto rest = A.bottomRightCorner(4 - k, 4 - k);
    if (rest.cwiseAbs().maxCoeff() > kIndefiniteTol * trace || trace <= 0.0) {
      Eigen::SelfAdjointEigenSolver<Mat4> es(0.5 * (C + C.transpose()), Eigen::EigenvaluesOnly);
      if (es.eigenvalues()(0) < -kIndefiniteTol * std::max(trace, 1e-300)) {
        throw IndefiniteCluster("cluster matrix is indefinite (min eigenvalue " +
                                std::to_string(es.eigenvalues()(0)) + ")");
      }
    }
  }

  ClusterFactor f;
  f.rank = k;
  for (int i = 0; i < 4; ++i) f.L.row(perm[i]) = Lp.row(i);
  return f;
}

Vec4 QrCompression::rotate(const Eigen::VectorXd& stacked) const {
  Vec4 out = Vec4::Zero();
  const Eigen::VectorXd r = q_thin.transpose() * stacked;
  out.head(r.size()) = r;
  return out;
}

QrCompression compress_qr(std::span<const Vec3> points_local) {
  const Eigen::Index m = static_cast<Eigen::Index>(points_local.size());
  if (m < 1) throw RejectedInput("QR compression needs at least one point");
  Eigen::MatrixXd stacked(m, 4);
  for (Eigen::Index i = 0; i < m; ++i) stacked.row(i) = points_local[i].homogeneous().transpose();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
  const Eigen::Index k = std::min<Eigen::Index>(m, 4);
  QrCompression out;
  out.R.topRows(k) = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  out.q_thin = qr.householderQ() * Eigen::MatrixXd::Identity(m, k);
  return out;
}

Vec4 cluster_to_plane_residual(const ClusterFactor& factor, const HomogeneousTransform& T,
                               const PlanePatch& plane) {
  return factor.L.transpose() * (T.matrix().transpose() * plane.homogeneous());
}

PlaneJacobianStructure plane_measurement_structure(const Pose& clone_pose, const Pose& extrinsic,
                                                   const PlanePatch& plane) {
  const Mat3 R_I = clone_pose.rotation.matrix();
  const Mat3 R_IL = extrinsic.rotation.matrix();
  const Pose lidar = clone_pose.compose(extrinsic);
  const Mat3 R_L = lidar.rotation.matrix();
  const Vec3& p_L = lidar.position;
  const Vec3& n = plane.normal;

  PlaneJacobianStructure s;
  s.pose.setZero();
  s.pose.block<3, 3>(0, 0) = R_IL.transpose() * skew(R_I.transpose() * n);
  s.pose.block<1, 3>(3, 0) = -n.transpose() * R_I * skew(extrinsic.position);
  s.pose.block<1, 3>(3, 3) = n.transpose();

  if (std::abs(plane.distance) >= kClosestPointMinDistance) {
    const Mat3 dn = (Mat3::Identity() - n * n.transpose()) / plane.distance;
    s.plane.topRows<3>() = R_L.transpose() * dn;
    s.plane.row(3) = p_L.transpose() * dn - n.transpose();
  } else {
    const Eigen::Matrix<double, 3, 2> B = tangent_basis(n);
    s.plane.setZero();
    s.plane.block<3, 2>(0, 0) = R_L.transpose() * B;
    s.plane.block<1, 2>(3, 0) = p_L.transpose() * B;
    s.plane(3, 2) = -1.0;
    s.tangent_chart = true;
  }
  return s;
}

StateLayout::StateLayout(const FilterState& state) : dim_(state.dim()) {
  offsets_.reserve(state.clones.size());
  for (std::size_t i = 0; i < state.clones.size(); ++i) {
    offsets_.emplace_back(state.clones[i].frame_id, FilterState::clone_offset(i));
  }
}

int StateLayout::offset_of(FrameId id) const {
  for (const auto& [fid, off] : offsets_) {
    if (fid == id) return off;
  }
  throw MissingClone("frame " + std::to_string(id) + " has no clone in the window");
}

ClusterJacobians cluster_to_plane_jacobians(const ClusterFactor& factor, const Pose& clone_pose,
                                            const Pose& extrinsic, const PlanePatch& plane,
                                            const StateLayout& layout, FrameId frame) {
  const int offset = layout.offset_of(frame);
  const PlaneJacobianStructure s = plane_measurement_structure(clone_pose, extrinsic, plane);
  const Mat4 Lt = factor.L.transpose();
  ClusterJacobians J;
  J.H_x = Eigen::MatrixXd::Zero(4, layout.dim());
  J.H_x.block<4, 6>(0, offset) = Lt * s.pose;
  J.H_pi = Lt * s.plane;
  J.tangent_chart = s.tangent_chart;
  return J;
}

CompressedMeasurement make_cluster_measurement(const PointCluster& local_cluster,
                                               const FilterState& state, const StateLayout& layout,
                                               FrameId frame, const Pose& extrinsic,
                                               const PlanePatch& plane) {
  const Pose& clone = state.clones.at(state.clone_index(frame)).pose;
  const ClusterFactor factor = cluster_factorize(local_cluster.matrix());
  const ClusterJacobians J =
      cluster_to_plane_jacobians(factor, clone, extrinsic, plane, layout, frame);

  CompressedMeasurement m;
  const HomogeneousTransform T = clone.compose(extrinsic).to_transform();
  m.residual = -cluster_to_plane_residual(factor, T, plane);
  m.H_x = J.H_x;
  m.H_pi = J.H_pi;
  m.frame_id = frame;
  m.point_count = local_cluster.n;
  m.rank = factor.rank;
  m.tangent_chart = J.tangent_chart;
  return m;
}

PointMeasurements make_point_measurements(std::span<const Vec3> local_points,
                                          const FilterState& state, const StateLayout& layout,
                                          FrameId frame, const Pose& extrinsic,
                                          const PlanePatch& plane) {
  const Pose& clone = state.clones.at(state.clone_index(frame)).pose;
  const int offset = layout.offset_of(frame);
  const PlaneJacobianStructure s = plane_measurement_structure(clone, extrinsic, plane);
  const Vec4 g = clone.compose(extrinsic).to_transform().matrix().transpose() * plane.homogeneous();

  const Eigen::Index m = static_cast<Eigen::Index>(local_points.size());
  PointMeasurements out;
  out.frame_id = frame;
  out.tangent_chart = s.tangent_chart;
  out.residual.resize(m);
  out.H_x = Eigen::MatrixXd::Zero(m, layout.dim());
  out.H_pi.resize(m, 3);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Vec4 pbar = local_points[j].homogeneous();
    out.residual(j) = -pbar.dot(g);
    out.H_x.block<1, 6>(j, offset) = pbar.transpose() * s.pose;
    out.H_pi.row(j) = pbar.transpose() * s.plane;
  }
  return out;
}

}  // namespace c2p
