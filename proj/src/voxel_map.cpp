#include "c2p/voxel_map.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "c2p/parallel.hpp"

namespace c2p {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using SliceMap = std::unordered_map<VoxelIndex, FrameSlice, VoxelIndexHash>;

void add_point(FrameSlice& s, const Vec3& local, const Vec3& global, std::uint32_t index) {
  s.local_points.push_back(local);
  s.point_indices.push_back(index);
  s.global_points.push_back(global);
  s.local_cluster.add(local);
  s.global_cluster.add(global);
}

// Keys in first-seen order so that iteration is reproducible.
struct OrderedSlices {
  std::vector<VoxelIndex> keys;
  SliceMap slices;
};

OrderedSlices voxelize_frame(const WindowFrame& frame, double resolution) {
  OrderedSlices out;
  const Mat3 R = frame.pose.rotation.matrix();
  const Vec3& t = frame.pose.position;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const Vec3& p = frame.points[i];
    const Vec3 g = R * p + t;
    const VoxelIndex key = voxel_index_of(g, resolution, 0);
    auto [it, inserted] = out.slices.try_emplace(key);
    if (inserted) {
      it->second.frame_id = frame.frame_id;
      out.keys.push_back(key);
    }
    add_point(it->second, p, g, static_cast<std::uint32_t>(i));
  }
  return out;
}

double max_plane_distance(const VoxelCell& cell, const PlanePatch& plane) {
  double worst = 0.0;
  for (const FrameSlice& s : cell.frames) {
    for (const Vec3& p : s.global_points) worst = std::max(worst, std::abs(plane.signed_distance(p)));
  }
  return worst;
}

void fit_cell(VoxelCell& cell, const VoxelMapParams& params) {
  cell.aggregate = PointCluster{};
  for (const FrameSlice& s : cell.frames) cell.aggregate += s.global_cluster;

  PlaneFit fit = fit_plane(cell.aggregate, params.tau, params.min_points);
  if (fit.status == FitStatus::kPlanar && params.max_point_distance > 0.0 &&
      max_plane_distance(cell, fit.plane) > params.max_point_distance) {
    fit.status = FitStatus::kNotPlanar;
  }
  cell.status = fit.status;
  if (fit.status == FitStatus::kPlanar) {
    cell.plane = fit.plane;
    cell.plane->voxel = cell.index;
    return;
  }
  if (fit.status == FitStatus::kDegenerate || cell.index.depth >= params.max_depth) return;

  // Re-bin every window point of this cell at the child resolution.
  const int child_depth = cell.index.depth + 1;
  std::vector<VoxelIndex> keys;
  std::unordered_map<VoxelIndex, std::vector<FrameSlice>, VoxelIndexHash> children;
  for (FrameSlice& s : cell.frames) {
    for (std::size_t j = 0; j < s.global_points.size(); ++j) {
      const VoxelIndex key = voxel_index_of(s.global_points[j], params.resolution, child_depth);
      auto [it, inserted] = children.try_emplace(key);
      if (inserted) keys.push_back(key);
      std::vector<FrameSlice>& per_frame = it->second;
      if (per_frame.empty() || per_frame.back().frame_id != s.frame_id) {
        per_frame.emplace_back();
        per_frame.back().frame_id = s.frame_id;
      }
      add_point(per_frame.back(), s.local_points[j], s.global_points[j], s.point_indices[j]);
    }
    std::vector<Vec3>().swap(s.local_points);
    std::vector<Vec3>().swap(s.global_points);
    std::vector<std::uint32_t>().swap(s.point_indices);
  }
  std::sort(keys.begin(), keys.end());
  cell.children.reserve(keys.size());
  for (const VoxelIndex& key : keys) {
    VoxelCell child;
    child.index = key;
    child.frames = std::move(children[key]);
    fit_cell(child, params);
    cell.children.push_back(std::move(child));
  }
}

void collect_planes(const VoxelCell& cell, std::vector<const VoxelCell*>& out) {
  if (cell.plane) {
    out.push_back(&cell);
    return;
  }
  for (const VoxelCell& c : cell.children) collect_planes(c, out);
}

}  // namespace

std::size_t VoxelIndexHash::operator()(const VoxelIndex& k) const noexcept {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(k.x));
  h = mix64(h ^ static_cast<std::uint64_t>(k.y));
  h = mix64(h ^ static_cast<std::uint64_t>(k.z));
  return static_cast<std::size_t>(mix64(h ^ static_cast<std::uint64_t>(k.depth)));
}

VoxelIndex voxel_index_of(const Vec3& p, double resolution, int depth) {
  const double cell = resolution / static_cast<double>(std::int64_t{1} << depth);
  return {static_cast<std::int64_t>(std::floor(p.x() / cell)),
          static_cast<std::int64_t>(std::floor(p.y() / cell)),
          static_cast<std::int64_t>(std::floor(p.z() / cell)), depth};
}

Mat4 PointCluster::matrix() const {
  Mat4 C;
  C.topLeftCorner<3, 3>() = P;
  C.topRightCorner<3, 1>() = v;
  C.bottomLeftCorner<1, 3>() = v.transpose();
  C(3, 3) = static_cast<double>(n);
  return C;
}

Mat3 PointCluster::covariance() const {
  const double inv_n = 1.0 / static_cast<double>(n);
  return P * inv_n - (v * inv_n) * (v * inv_n).transpose();
}

PointCluster accumulate_cluster(std::span<const Vec3> points) {
  PointCluster c;
  for (const Vec3& p : points) c.add(p);
  return c;
}

PlaneFit fit_plane(const PointCluster& cluster, double tau, std::int64_t min_points) {
  PlaneFit fit;
  if (cluster.n < std::max<std::int64_t>(min_points, 1)) {
    fit.status = FitStatus::kDegenerate;
    return fit;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cluster.covariance());
  // Eigen sorts ascending; store descending.
  const Vec3 ev = es.eigenvalues();
  fit.eigenvalues = Vec3(ev(2), ev(1), ev(0));
  if (!(ev(0) < tau * ev(1))) {
    fit.status = FitStatus::kNotPlanar;
    return fit;
  }

  PlanePatch& pl = fit.plane;
  pl.eigenvalues = fit.eigenvalues;
  pl.eigenvectors.col(0) = es.eigenvectors().col(2);
  pl.eigenvectors.col(1) = es.eigenvectors().col(1);
  pl.eigenvectors.col(2) = es.eigenvectors().col(0);
  pl.centroid = cluster.centroid();
  pl.point_count = cluster.n;

  Vec3 n = es.eigenvectors().col(0).normalized();
  double d = n.dot(pl.centroid);
  const double zero_tol = 1e-12 * (1.0 + pl.centroid.norm());
  if (std::abs(d) <= zero_tol) {
    Eigen::Index k;
    n.cwiseAbs().maxCoeff(&k);
    if (n(k) < 0.0) n = -n;
    d = n.dot(pl.centroid);
  } else if (d < 0.0) {
    n = -n;
    d = -d;
  }
  pl.normal = n;
  pl.distance = d;
  pl.eigenvectors.col(2) = n;
  fit.status = FitStatus::kPlanar;
  return fit;
}

const FrameSlice* VoxelCell::slice(FrameId id) const {
  for (const FrameSlice& s : frames) {
    if (s.frame_id == id) return &s;
  }
  return nullptr;
}

VoxelMap::VoxelMap(std::vector<VoxelCell> roots) : roots_(std::move(roots)) {
  std::sort(roots_.begin(), roots_.end(),
            [](const VoxelCell& a, const VoxelCell& b) { return a.index < b.index; });
}

const VoxelCell* VoxelMap::find_root(const VoxelIndex& index) const {
  auto it = std::lower_bound(roots_.begin(), roots_.end(), index,
                             [](const VoxelCell& c, const VoxelIndex& k) { return c.index < k; });
  if (it == roots_.end() || it->index != index) return nullptr;
  return &*it;
}

std::vector<const VoxelCell*> VoxelMap::planar_leaves() const {
  std::vector<const VoxelCell*> out;
  for (const VoxelCell& r : roots_) collect_planes(r, out);
  return out;
}

std::size_t VoxelMap::point_count() const {
  std::size_t n = 0;
  for (const VoxelCell& r : roots_) n += r.point_count();
  return n;
}

VoxelMap build_window_voxels(std::span<const WindowFrame> frames, const VoxelMapParams& params) {
  if (!(params.resolution > 0.0)) throw RejectedInput("voxel resolution must be positive");
  if (params.max_depth < 0) throw RejectedInput("max_depth must be non-negative");

  // Frame level: independent per-frame voxelization.
  std::vector<OrderedSlices> per_frame(frames.size());
  parallel_for(frames.size(), params.threads, [&](std::size_t i) {
    per_frame[i] = voxelize_frame(frames[i], params.resolution);
  });

  // Merge in frame order, so every cell lists its slices in window order.
  std::unordered_map<VoxelIndex, std::size_t, VoxelIndexHash> slot;
  std::vector<VoxelCell> cells;
  for (OrderedSlices& f : per_frame) {
    for (const VoxelIndex& key : f.keys) {
      auto [it, inserted] = slot.try_emplace(key, cells.size());
      if (inserted) {
        cells.emplace_back();
        cells.back().index = key;
      }
      cells[it->second].frames.push_back(std::move(f.slices[key]));
    }
  }
  std::sort(cells.begin(), cells.end(),
            [](const VoxelCell& a, const VoxelCell& b) { return a.index < b.index; });

  // Cell level: aggregation and adaptive fitting, one task per root cell.
  parallel_for(cells.size(), params.threads, [&](std::size_t i) { fit_cell(cells[i], params); });
  return VoxelMap(std::move(cells));
}

}  // namespace c2p
