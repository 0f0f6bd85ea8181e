#include "c2p/simulator.hpp"

#include <cmath>
#include <numbers>

namespace c2p {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  if (sigma == 0.0) return Vec3::Zero();
  std::normal_distribution<double> n(0.0, sigma);
  return {n(rng), n(rng), n(rng)};
}

// Body rate of R = Rz(yaw) Ry(pitch) Rx(roll).
Vec3 euler_zyx_body_rate(double pitch, double roll, double yaw_dot, double pitch_dot,
                         double roll_dot) {
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  return {roll_dot - yaw_dot * sp, pitch_dot * cr + yaw_dot * sr * cp,
          -pitch_dot * sr + yaw_dot * cr * cp};
}

void add_box_sides(PlanarWorld& w, const Mat3& R, const Vec3& center, double hx, double hy,
                   double z0, double height) {
  const Vec3 ex = R * Vec3(2 * hx, 0, 0), ey = R * Vec3(0, 2 * hy, 0), ez(0, 0, height);
  const Vec3 c = R * (center - Vec3(hx, hy, 0)) + Vec3(0, 0, z0);
  const Vec3 c2 = c + ex + ey;
  w.add_facet(c, ex, ez);
  w.add_facet(c + ex, ey, ez);
  w.add_facet(c2, -ex, ez);
  w.add_facet(c2 - ex, -ey, ez);
}

}  // namespace

void PlanarWorld::add_facet(const Vec3& corner, const Vec3& edge_u, const Vec3& edge_v) {
  const Vec3 n = edge_u.cross(edge_v);
  if (!(n.norm() > 1e-12 * (1.0 + edge_u.norm() * edge_v.norm()))) {
    throw RejectedInput("facet edges must be linearly independent");
  }
  facets_.push_back({corner, edge_u, edge_v, n.normalized()});
}

std::optional<RayHit> PlanarWorld::raycast(const Vec3& origin, const Vec3& dir, double max_range,
                                           double min_range) const {
  std::optional<RayHit> best;
  double best_range = max_range;
  for (std::size_t i = 0; i < facets_.size(); ++i) {
    const Facet& f = facets_[i];
    const double denom = f.normal.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double r = f.normal.dot(f.corner - origin) / denom;
    if (r < min_range || r > best_range) continue;
    // Barycentric coordinates inside the parallelogram.
    const Vec3 q = origin + r * dir - f.corner;
    const double uu = f.edge_u.squaredNorm(), vv = f.edge_v.squaredNorm(),
                 uv = f.edge_u.dot(f.edge_v);
    const double qu = q.dot(f.edge_u), qv = q.dot(f.edge_v);
    const double det = uu * vv - uv * uv;
    const double s = (qu * vv - qv * uv) / det;
    const double t = (qv * uu - qu * uv) / det;
    if (s < 0.0 || s > 1.0 || t < 0.0 || t > 1.0) continue;
    best_range = r;
    best = RayHit{r, i};
  }
  return best;
}

PlanarWorld make_room(const RoomSpec& spec) {
  if ((spec.size.array() <= 0.0).any()) throw RejectedInput("room size must be positive");
  const Mat3 R = Rotation::from_euler_zyx(spec.yaw, 0, 0).matrix();
  const Vec3 ex = R * Vec3(spec.size.x(), 0, 0);
  const Vec3 ey = R * Vec3(0, spec.size.y(), 0);
  const Vec3 ez(0, 0, spec.size.z());
  const Vec3 o = R * spec.min_corner;
  const Vec3 far = o + ex + ey + ez;

  PlanarWorld w;
  w.add_facet(o, ex, ey);          // floor
  w.add_facet(far, -ex, -ey);      // ceiling
  w.add_facet(o, ex, ez);          // walls
  w.add_facet(o, ez, ey);
  w.add_facet(far, -ez, -ex);
  w.add_facet(far, -ey, -ez);

  if (spec.interior_facets) {
    const Vec3 mid = spec.min_corner + 0.5 * spec.size;
    const double z0 = spec.min_corner.z();
    // Pillar in the middle of the room, rotated against the walls.
    const Mat3 Rp = R * Rotation::from_euler_zyx(0.4, 0, 0).matrix();
    add_box_sides(w, Rp, Rp.transpose() * R * Vec3(mid.x(), mid.y(), 0), 0.6, 0.6, z0,
                  spec.size.z());
    // Panel leaning against the +x wall.
    const Vec3 base = spec.min_corner + Vec3(spec.size.x() - 1.2, 0.25 * spec.size.y(), 0.0);
    w.add_facet(R * base, R * Vec3(0, 3.0, 0), R * Vec3(0.9, 0, 2.2));
    // Low block near the -y wall.
    const Vec3 block(spec.min_corner.x() + 0.3 * spec.size.x() + 0.75,
                     spec.min_corner.y() + 1.2, 0.0);
    add_box_sides(w, R, block, 0.75, 0.4, z0, 1.1);
  }
  return w;
}

double Trajectory::length(int samples) const {
  if (samples < 2) samples = 2;
  if (samples % 2) ++samples;
  const double T = duration();
  const double h = T / samples;
  double sum = 0.0;
  for (int i = 0; i <= samples; ++i) {
    const double w = (i == 0 || i == samples) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += w * evaluate(i * h).velocity.norm();
  }
  return sum * h / 3.0;
}

TrajectoryPoint HoverTrajectory::evaluate(double) const {
  TrajectoryPoint p;
  p.pose = pose_;
  return p;
}

TrajectoryPoint CircleTrajectory::evaluate(double t) const {
  const double a = rate_ * t;
  TrajectoryPoint p;
  p.pose.position = center_ + radius_ * Vec3(std::cos(a), std::sin(a), 0.0);
  p.pose.rotation = Rotation::from_euler_zyx(a + 0.5 * std::numbers::pi, 0, 0);
  p.velocity = radius_ * rate_ * Vec3(-std::sin(a), std::cos(a), 0.0);
  p.acceleration = -radius_ * rate_ * rate_ * Vec3(std::cos(a), std::sin(a), 0.0);
  p.angular_velocity = Vec3(0, 0, rate_);
  return p;
}

TrajectoryPoint YawSpinTrajectory::evaluate(double t) const {
  TrajectoryPoint p;
  p.pose.position = position_;
  p.pose.rotation = Rotation::from_euler_zyx(yaw_rate_ * t, 0, 0);
  p.angular_velocity = Vec3(0, 0, yaw_rate_);
  return p;
}

OvalLoopTrajectory::OvalLoopTrajectory(const OvalLoopSpec& spec) : spec_(spec) {
  if (!(spec.semi_axis_x > 0 && spec.semi_axis_y > 0 && spec.loops > 0 && spec.mean_speed > 0)) {
    throw RejectedInput("oval loop needs positive axes, loops and speed");
  }
  const double phase_span = 2.0 * std::numbers::pi * spec.loops;
  // Provisional duration from the ellipse perimeter, refined once the scale is known.
  const double target = spec.target_length > 0 ? spec.target_length
                                                : spec.loops * std::numbers::pi *
                                                      (spec.semi_axis_x + spec.semi_axis_y);
  duration_ = target / spec.mean_speed;
  rate_ = phase_span / duration_;
  if (spec.target_length > 0) {
    for (int it = 0; it < 30; ++it) {
      const double L = length(40000);
      const double ratio = spec.target_length / L;
      scale_ *= ratio;
      if (std::abs(ratio - 1.0) < 1e-12) break;
    }
  }
}

TrajectoryPoint OvalLoopTrajectory::evaluate(double t) const { return evaluate_scaled(t, scale_); }

TrajectoryPoint OvalLoopTrajectory::evaluate_scaled(double t, double s) const {
  const double r = rate_;
  const double ph = r * t;
  const double a = s * spec_.semi_axis_x, b = s * spec_.semi_axis_y;
  const double kz = spec_.z_cycles_per_loop, ky = spec_.yaw_cycles_per_loop;
  const double Az = spec_.z_amplitude, Ay = spec_.yaw_amplitude, At = spec_.tilt_amplitude;

  TrajectoryPoint p;
  p.pose.position = spec_.center + Vec3(a * std::cos(ph), b * std::sin(ph), Az * std::sin(kz * ph));
  p.velocity = Vec3(-a * r * std::sin(ph), b * r * std::cos(ph), Az * kz * r * std::cos(kz * ph));
  p.acceleration = Vec3(-a * r * r * std::cos(ph), -b * r * r * std::sin(ph),
                        -Az * kz * kz * r * r * std::sin(kz * ph));

  const double yaw = ph + 0.5 * std::numbers::pi + Ay * std::sin(ky * ph);
  const double yaw_dot = r + Ay * ky * r * std::cos(ky * ph);
  const double roll = At * std::sin(4.0 * ph + 0.3);
  const double roll_dot = At * 4.0 * r * std::cos(4.0 * ph + 0.3);
  const double pitch = At * std::sin(3.0 * ph + 1.1);
  const double pitch_dot = At * 3.0 * r * std::cos(3.0 * ph + 1.1);
  p.pose.rotation = Rotation::from_euler_zyx(yaw, pitch, roll);
  p.angular_velocity = euler_zyx_body_rate(pitch, roll, yaw_dot, pitch_dot, roll_dot);
  return p;
}

void LidarModel::validate() const {
  if (rings <= 0 || !(vertical_resolution_deg > 0) || !(horizontal_resolution_deg > 0) ||
      !(rate_hz > 0) || range_noise < 0 || !(max_range > min_range) || min_range < 0) {
    throw RejectedInput("invalid LiDAR model");
  }
}

int LidarModel::azimuth_steps() const {
  return static_cast<int>(std::lround(360.0 / horizontal_resolution_deg));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ (stream * 0xd1b54a32d192ed03ULL);
  return splitmix64(s);
}

ImuStream sample_imu(const Trajectory& traj, const ImuSimulationSpec& spec, std::uint64_t seed,
                     double gravity) {
  if (!(spec.rate_hz > 0)) throw RejectedInput("IMU rate must be positive");
  spec.noise.validate();
  std::mt19937_64 rng(derive_seed(seed, 1));
  const double dt = 1.0 / spec.rate_hz;
  const auto count = static_cast<std::size_t>(std::floor(traj.duration() * spec.rate_hz + 1e-9)) + 1;

  Vec3 bg = gaussian3(rng, spec.gyro_bias_init);
  Vec3 ba = gaussian3(rng, spec.accel_bias_init);
  const double gyro_sd = spec.noise.gyro_noise / std::sqrt(dt);
  const double accel_sd = spec.noise.accel_noise / std::sqrt(dt);
  const double bg_sd = spec.noise.gyro_random_walk * std::sqrt(dt);
  const double ba_sd = spec.noise.accel_random_walk * std::sqrt(dt);

  ImuStream out;
  out.samples.reserve(count);
  out.gyro_bias.reserve(count);
  out.accel_bias.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) * dt;
    const TrajectoryPoint tp = traj.evaluate(t);
    const Vec3 f = tp.pose.rotation.inverse() * (tp.acceleration + gravity * Vec3::UnitZ());
    ImuSample s;
    s.timestamp = t;
    s.gyro = tp.angular_velocity + bg + gaussian3(rng, gyro_sd);
    s.accel = f + ba + gaussian3(rng, accel_sd);
    out.samples.push_back(s);
    out.gyro_bias.push_back(bg);
    out.accel_bias.push_back(ba);
    bg += gaussian3(rng, bg_sd);
    ba += gaussian3(rng, ba_sd);
  }
  return out;
}

LidarScan sample_lidar_scan(const PlanarWorld& world, const Trajectory& traj, double t_end,
                            const LidarModel& model, std::uint64_t seed, const Pose& extrinsic,
                            std::vector<std::size_t>* hit_facets) {
  model.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int steps = model.azimuth_steps();
  const double period = model.period();
  const double deg = std::numbers::pi / 180.0;

  std::vector<Vec3> ring_dirs(model.rings);
  std::vector<double> el(model.rings);
  for (int i = 0; i < model.rings; ++i) {
    el[i] = (i - 0.5 * (model.rings - 1)) * model.vertical_resolution_deg * deg;
  }

  LidarScan scan;
  scan.timestamp = t_end;
  scan.points.reserve(static_cast<std::size_t>(steps) * model.rings);
  scan.offsets.reserve(scan.points.capacity());
  if (hit_facets) hit_facets->clear();
  for (int j = 0; j < steps; ++j) {
    const double offset = -period + period * j / steps;
    const Pose lidar = traj.evaluate(t_end + offset).pose.compose(extrinsic);
    const double az = j * model.horizontal_resolution_deg * deg;
    const Mat3 R = lidar.rotation.matrix();
    for (int i = 0; i < model.rings; ++i) {
      const Vec3 d(std::cos(el[i]) * std::cos(az), std::cos(el[i]) * std::sin(az), std::sin(el[i]));
      const auto hit = world.raycast(lidar.position, R * d, model.max_range, model.min_range);
      const double n = noise(rng);  // drawn for every ray so misses keep the stream aligned
      if (!hit) continue;
      const double range = hit->range + model.range_noise * n;
      scan.points.push_back(range * d);
      scan.offsets.push_back(offset);
      if (hit_facets) hit_facets->push_back(hit->facet);
    }
  }
  return scan;
}

SimulatedScans::SimulatedScans(std::shared_ptr<const PlanarWorld> world,
                               std::shared_ptr<const Trajectory> traj, LidarModel model,
                               std::uint64_t seed, Pose extrinsic)
    : world_(std::move(world)),
      traj_(std::move(traj)),
      model_(model),
      seed_(seed),
      extrinsic_(extrinsic) {
  model_.validate();
  count_ = static_cast<std::size_t>(std::floor(traj_->duration() * model_.rate_hz + 1e-9));
}

double SimulatedScans::timestamp(std::size_t i) const {
  return static_cast<double>(i + 1) / model_.rate_hz;
}

LidarScan SimulatedScans::load(std::size_t i) const {
  if (i >= count_) throw std::out_of_range("scan index out of range");
  return sample_lidar_scan(*world_, *traj_, timestamp(i), model_, derive_seed(seed_, 1000 + i),
                           extrinsic_);
}

Dataset simulate_dataset(const SimulationConfig& config, std::uint64_t seed, const Pose& extrinsic) {
  auto world = std::make_shared<PlanarWorld>(make_room(config.room));
  auto traj = std::make_shared<OvalLoopTrajectory>(config.trajectory);

  ImuSimulationSpec imu = config.imu;
  LidarModel lidar = config.lidar;
  if (config.noise_free) {
    imu.noise.gyro_noise = imu.noise.accel_noise = 0.0;
    imu.noise.gyro_random_walk = imu.noise.accel_random_walk = 0.0;
    imu.gyro_bias_init = imu.accel_bias_init = 0.0;
    lidar.range_noise = 0.0;
  }
  ImuStream stream = sample_imu(*traj, imu, seed, imu.noise.gravity);

  Dataset d;
  d.trajectory_length = traj->length();
  d.groundtruth.reserve(stream.samples.size());
  for (const ImuSample& s : stream.samples) {
    const TrajectoryPoint tp = traj->evaluate(s.timestamp);
    d.groundtruth.push_back({s.timestamp, tp.pose, tp.velocity});
  }
  ImuNavState init;
  init.timestamp = stream.samples.front().timestamp;
  init.position = d.groundtruth.front().pose.position;
  init.orientation = d.groundtruth.front().pose.rotation;
  init.velocity = d.groundtruth.front().velocity;
  init.gyro_bias = stream.gyro_bias.front();
  init.accel_bias = stream.accel_bias.front();
  d.initial = init;
  d.imu = std::move(stream.samples);
  d.scans = std::make_shared<SimulatedScans>(world, traj, lidar, derive_seed(seed, 2), extrinsic);
  return d;
}

}  // namespace c2p
