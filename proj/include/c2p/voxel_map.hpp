#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "c2p/filter_state.hpp"
#include "c2p/geometry.hpp"

namespace c2p {

/// Integer grid coordinates of a cell of size resolution / 2^depth.
struct VoxelIndex {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;
  int depth = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& k) const noexcept;
};

/// floor(p / cell) componentwise; cells are half-open [i*cell, (i+1)*cell).
VoxelIndex voxel_index_of(const Vec3& p, double resolution, int depth = 0);

/// Additive scatter C = sum [p;1][p;1]^T = [P v; v^T n].
struct PointCluster {
  Mat3 P = Mat3::Zero();
  Vec3 v = Vec3::Zero();
  std::int64_t n = 0;

  void add(const Vec3& p) {
    P.noalias() += p * p.transpose();
    v += p;
    ++n;
  }
  PointCluster& operator+=(const PointCluster& o) {
    P += o.P;
    v += o.v;
    n += o.n;
    return *this;
  }
  friend PointCluster operator+(PointCluster a, const PointCluster& b) { return a += b; }

  Mat4 matrix() const;
  Vec3 centroid() const { return v / static_cast<double>(n); }
  /// P/n - v v^T / n^2
  Mat3 covariance() const;
};

PointCluster accumulate_cluster(std::span<const Vec3> points);

enum class FitStatus { kPlanar, kNotPlanar, kDegenerate };

/// Plane n^T x = d with the sign fixed so that d >= 0.
struct PlanePatch {
  Vec3 normal = Vec3::UnitZ();
  double distance = 0.0;
  Vec3 eigenvalues = Vec3::Zero();    // lambda1 >= lambda2 >= lambda3
  Mat3 eigenvectors = Mat3::Identity();  // columns ordered like eigenvalues
  Vec3 centroid = Vec3::Zero();
  VoxelIndex voxel;
  std::int64_t point_count = 0;

  Vec3 closest_point() const { return distance * normal; }
  /// pi = [n; -d]
  Vec4 homogeneous() const { return {normal.x(), normal.y(), normal.z(), -distance}; }
  double signed_distance(const Vec3& p) const { return normal.dot(p) - distance; }
};

struct PlaneFit {
  FitStatus status = FitStatus::kDegenerate;
  PlanePatch plane;  // meaningful only when status == kPlanar
  Vec3 eigenvalues = Vec3::Zero();
};

PlaneFit fit_plane(const PointCluster& cluster, double tau, std::int64_t min_points = 10);

/// One frame of the sliding window: LiDAR pose in the global frame and its
/// points in the LiDAR frame.
struct WindowFrame {
  FrameId frame_id = 0;
  Pose pose;
  std::span<const Vec3> points;
};

/// Points of a single frame that fall into one cell.
struct FrameSlice {
  FrameId frame_id = 0;
  PointCluster global_cluster;
  PointCluster local_cluster;
  std::vector<Vec3> local_points;
  std::vector<Vec3> global_points;
  std::vector<std::uint32_t> point_indices;  // into WindowFrame::points
};

struct VoxelCell {
  VoxelIndex index;
  std::vector<FrameSlice> frames;  // ordered as the input frames
  PointCluster aggregate;
  FitStatus status = FitStatus::kDegenerate;
  std::optional<PlanePatch> plane;
  std::vector<VoxelCell> children;  // sorted by index; only when the fit failed above max depth

  const FrameSlice* slice(FrameId id) const;
  std::size_t point_count() const { return static_cast<std::size_t>(aggregate.n); }
};

struct VoxelMapParams {
  double resolution = 3.0;
  double tau = 0.01;
  int max_depth = 3;
  std::int64_t min_points = 10;
  /// A planar fit is demoted to NotPlanar (and subdivided) when any of its
  /// points lies farther than this from the plane; 0 disables the check.
  double max_point_distance = 0.0;
  int threads = 1;
};

class VoxelMap {
 public:
  VoxelMap() = default;
  explicit VoxelMap(std::vector<VoxelCell> roots);

  const std::vector<VoxelCell>& roots() const { return roots_; }
  const VoxelCell* find_root(const VoxelIndex& index) const;
  /// Every accepted plane in the octree, ordered by (root key, child key).
  std::vector<const VoxelCell*> planar_leaves() const;
  std::size_t point_count() const;

 private:
  std::vector<VoxelCell> roots_;  // sorted by index
};

/// Voxelizes all window frames, aggregates per-frame clusters per cell and
/// fits planes with octree subdivision. Frame-level voxelization and
/// cell-level fitting run on params.threads workers; results do not depend on
/// the thread count.
VoxelMap build_window_voxels(std::span<const WindowFrame> frames, const VoxelMapParams& params);

}  // namespace c2p
