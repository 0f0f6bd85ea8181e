#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "c2p/filter_state.hpp"
#include "c2p/geometry.hpp"
#include "c2p/voxel_map.hpp"

namespace c2p {

/// Signed distance of the transformed point to the plane: pi^T T [p; 1].
double point_on_plane(const PlanePatch& plane, const HomogeneousTransform& T, const Vec3& p_local);

class IndefiniteCluster : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L L^T = C with L lower triangular up to a row permutation. Columns at and
/// beyond `rank` are zero.
struct ClusterFactor {
  Mat4 L = Mat4::Zero();
  int rank = 0;
};

/// Diagonally pivoted Cholesky of a 4x4 PSD cluster matrix.
ClusterFactor cluster_factorize(const Mat4& C);

/// Thin QR of the stacked rows [p^T 1]. Only used to validate the cluster path.
struct QrCompression {
  Mat4 R = Mat4::Zero();         // upper triangular; rows >= min(m, 4) are zero
  Eigen::MatrixXd q_thin;        // m x min(m, 4)

  /// Q^T z, padded to four entries.
  Vec4 rotate(const Eigen::VectorXd& stacked) const;
};

QrCompression compress_qr(std::span<const Vec3> points_local);

/// z'' = L^T T^T pi. Its squared norm is the sum of squared point-to-plane
/// distances of the points that formed the cluster.
Vec4 cluster_to_plane_residual(const ClusterFactor& factor, const HomogeneousTransform& T,
                               const PlanePatch& plane);

/// Derivatives of g = T^T pi, where T = clone_pose * extrinsic. `pose` is with
/// respect to the clone error (dtheta, dp) under R = R_hat Exp(dtheta); `plane`
/// is with respect to the closest point p_pi = d n. Planes with |d| < 1e-6
/// use a tangent chart (normal in the two directions orthogonal to n, then d)
/// and report `tangent_chart`.
struct PlaneJacobianStructure {
  Eigen::Matrix<double, 4, 6> pose;
  Eigen::Matrix<double, 4, 3> plane;
  bool tangent_chart = false;
};

PlaneJacobianStructure plane_measurement_structure(const Pose& clone_pose, const Pose& extrinsic,
                                                   const PlanePatch& plane);

/// Maps clone frame ids to error-state columns.
class StateLayout {
 public:
  explicit StateLayout(const FilterState& state);
  int dim() const { return dim_; }
  /// Throws MissingClone when the frame has no clone in the window.
  int offset_of(FrameId id) const;

 private:
  int dim_ = 0;
  std::vector<std::pair<FrameId, int>> offsets_;
};

class MissingClone : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct ClusterJacobians {
  Eigen::MatrixXd H_x;                // 4 x state dim
  Eigen::Matrix<double, 4, 3> H_pi;
  bool tangent_chart = false;
};

ClusterJacobians cluster_to_plane_jacobians(const ClusterFactor& factor, const Pose& clone_pose,
                                            const Pose& extrinsic, const PlanePatch& plane,
                                            const StateLayout& layout, FrameId frame);

/// Linearized cluster-to-plane measurement of one frame against one plane.
/// residual = 0 - z''.
struct CompressedMeasurement {
  Vec4 residual = Vec4::Zero();
  Eigen::MatrixXd H_x;
  Eigen::Matrix<double, 4, 3> H_pi = Eigen::Matrix<double, 4, 3>::Zero();
  FrameId frame_id = 0;
  std::int64_t point_count = 0;
  int rank = 0;
  bool tangent_chart = false;
};

CompressedMeasurement make_cluster_measurement(const PointCluster& local_cluster,
                                               const FilterState& state, const StateLayout& layout,
                                               FrameId frame, const Pose& extrinsic,
                                               const PlanePatch& plane);

/// The uncompressed alternative: one scalar row per point.
struct PointMeasurements {
  Eigen::VectorXd residual;
  Eigen::MatrixXd H_x;
  Eigen::Matrix<double, Eigen::Dynamic, 3> H_pi;
  FrameId frame_id = 0;
  bool tangent_chart = false;
};

PointMeasurements make_point_measurements(std::span<const Vec3> local_points,
                                          const FilterState& state, const StateLayout& layout,
                                          FrameId frame, const Pose& extrinsic,
                                          const PlanePatch& plane);

}  // namespace c2p
