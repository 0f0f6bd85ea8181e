#include <doctest.h>

#include <cmath>
#include <numbers>

#include "c2p/simulator.hpp"
#include "support/oracles.hpp"

using namespace c2p;

namespace {

ImuSimulationSpec quiet_imu() {
  ImuSimulationSpec s;
  s.noise.gyro_noise = s.noise.accel_noise = 0.0;
  s.noise.gyro_random_walk = s.noise.accel_random_walk = 0.0;
  s.gyro_bias_init = s.accel_bias_init = 0.0;
  return s;
}

double facet_distance(const Facet& f, const Vec3& p) { return f.normal.dot(p) - f.distance(); }

}  // namespace

TEST_CASE("hovering at rest measures gravity only") {
  const HoverTrajectory hover(Pose{Rotation::identity(), Vec3(1, 2, 3)}, 2.0);
  const ImuStream s = sample_imu(hover, quiet_imu(), 1);
  REQUIRE(s.samples.size() == 501);
  for (const ImuSample& m : s.samples) {
    CHECK((m.accel - Vec3(0, 0, 9.81)).norm() < 1e-12);
    CHECK(m.gyro.norm() < 1e-12);
  }
}

TEST_CASE("level circle measures the centripetal acceleration") {
  const double r = 3.0, w = 0.5;
  const CircleTrajectory circle(Vec3::Zero(), r, w, 10.0);
  const ImuStream s = sample_imu(circle, quiet_imu(), 1);
  for (std::size_t i = 0; i < s.samples.size(); i += 97) {
    const ImuSample& m = s.samples[i];
    CHECK(m.accel.head<2>().norm() == doctest::Approx(r * w * w).epsilon(1e-9));
    CHECK(m.accel.z() == doctest::Approx(9.81).epsilon(1e-12));
    CHECK(m.gyro.z() == doctest::Approx(w).epsilon(1e-9));
  }
}

TEST_CASE("the same seed reproduces IMU and scans bit for bit") {
  const OvalLoopTrajectory traj(OvalLoopSpec{});
  const ImuSimulationSpec spec;
  const ImuStream a = sample_imu(traj, spec, 42);
  const ImuStream b = sample_imu(traj, spec, 42);
  REQUIRE(a.samples.size() == b.samples.size());
  bool same = true;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    same = same && a.samples[i].accel == b.samples[i].accel && a.samples[i].gyro == b.samples[i].gyro;
  }
  CHECK(same);

  const PlanarWorld world = make_room(RoomSpec{});
  const LidarScan s1 = sample_lidar_scan(world, traj, 1.0, LidarModel{}, 9);
  const LidarScan s2 = sample_lidar_scan(world, traj, 1.0, LidarModel{}, 9);
  CHECK(s1.points == s2.points);
  CHECK(s1.offsets == s2.offsets);
}

TEST_CASE("distinct seeds change the noise but not the ground truth") {
  SimulationConfig cfg;
  cfg.trajectory.target_length = 6.0;
  cfg.trajectory.loops = 0.2;
  const Dataset a = simulate_dataset(cfg, 1);
  const Dataset b = simulate_dataset(cfg, 2);
  REQUIRE(a.groundtruth.size() == b.groundtruth.size());
  bool gt_same = true;
  for (std::size_t i = 0; i < a.groundtruth.size(); ++i) {
    gt_same = gt_same && a.groundtruth[i].pose.position == b.groundtruth[i].pose.position;
  }
  CHECK(gt_same);
  CHECK(a.imu[10].accel != b.imu[10].accel);
  CHECK(a.scans->load(0).points != b.scans->load(0).points);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("a nadir ray 2 m above the floor") {
  PlanarWorld world;
  world.add_facet(Vec3(-5, -5, 0), Vec3(10, 0, 0), Vec3(0, 10, 0));
  const Pose sensor{Rotation::exp(Vec3(std::numbers::pi, 0, 0)), Vec3(0, 0, 2)};
  const Vec3 dir = sensor.rotation * Vec3::UnitZ();
  const auto hit = world.raycast(sensor.position, dir, 60.0);
  REQUIRE(hit);
  CHECK(hit->range == doctest::Approx(2.0));
  const Vec3 local = sensor.inverse().transform(sensor.position + hit->range * dir);
  CHECK((local - Vec3(0, 0, 2)).norm() < 1e-12);
  CHECK_FALSE(world.raycast(sensor.position, -dir, 60.0));
}

TEST_CASE("degenerate facets are rejected and room facets are valid") {
  PlanarWorld world;
  CHECK_THROWS_AS(world.add_facet(Vec3::Zero(), Vec3::UnitX(), 2 * Vec3::UnitX()), RejectedInput);
  const PlanarWorld room = make_room(RoomSpec{});
  CHECK(room.facets().size() >= 6);
  for (const Facet& f : room.facets()) {
    CHECK(f.normal.norm() == doctest::Approx(1.0));
    CHECK(std::abs(f.normal.dot(f.edge_u)) < 1e-12);
    CHECK(std::abs(f.normal.dot(f.edge_v)) < 1e-12);
  }
}

TEST_CASE("noise-free points from a stationary sensor lie on their facets") {
  const PlanarWorld world = make_room(RoomSpec{});
  const HoverTrajectory hover(Pose{Rotation::exp(Vec3(0.02, -0.01, 0.4)), Vec3(0.5, 0.3, 0.2)}, 1.0);
  LidarModel model;
  model.range_noise = 0.0;
  std::vector<std::size_t> facets;
  const LidarScan scan = sample_lidar_scan(world, hover, 0.5, model, 3, Pose::identity(), &facets);
  REQUIRE(scan.points.size() == facets.size());
  REQUIRE(scan.points.size() > 1000);
  const Pose pose = hover.evaluate(0.5).pose;
  double worst = 0.0;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    worst = std::max(worst, std::abs(facet_distance(world.facets()[facets[i]], pose.transform(scan.points[i]))));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("moving-sensor points lie on their facets at their emission poses") {
  const PlanarWorld world = make_room(RoomSpec{});
  const OvalLoopTrajectory traj(OvalLoopSpec{});
  LidarModel model;
  model.range_noise = 0.0;
  const Pose extrinsic{Rotation::exp(Vec3(0.01, 0.02, -0.03)), Vec3(0.1, 0.0, 0.05)};
  std::vector<std::size_t> facets;
  const LidarScan scan = sample_lidar_scan(world, traj, 3.0, model, 3, extrinsic, &facets);
  REQUIRE(!scan.points.empty());
  double worst = 0.0;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    CHECK(scan.offsets[i] <= 0.0);
    CHECK(scan.offsets[i] >= -model.period());
    const Pose lidar = traj.evaluate(3.0 + scan.offsets[i]).pose.compose(extrinsic);
    worst = std::max(worst, std::abs(facet_distance(world.facets()[facets[i]], lidar.transform(scan.points[i]))));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("range noise stays within three sigma for almost every point") {
  const PlanarWorld world = make_room(RoomSpec{});
  const HoverTrajectory hover(Pose{Rotation::identity(), Vec3::Zero()}, 1.0);
  const LidarModel model;
  std::vector<std::size_t> facets;
  const LidarScan scan = sample_lidar_scan(world, hover, 0.5, model, 11, Pose::identity(), &facets);
  std::size_t outside = 0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Vec3& p = scan.points[i];
    const Facet& f = world.facets()[facets[i]];
    const double cos_incidence = std::abs(f.normal.dot(p.normalized()));
    const double range_error = facet_distance(f, p) / cos_incidence;
    sum_sq += range_error * range_error;
    if (std::abs(range_error) > 3 * model.range_noise) ++outside;
  }
  const double n = static_cast<double>(scan.points.size());
  CHECK(outside / n < 0.01);
  CHECK(std::sqrt(sum_sq / n) == doctest::Approx(model.range_noise).epsilon(0.05));
}

TEST_CASE("the default loop has the configured length") {
  const OvalLoopTrajectory traj(OvalLoopSpec{});
  CHECK(traj.length() == doctest::Approx(182.0).epsilon(1e-3));
  CHECK(traj.duration() == doctest::Approx(182.0 / 1.5).epsilon(1e-6));
  const TrajectoryPoint a = traj.evaluate(0.0);
  const TrajectoryPoint b = traj.evaluate(traj.duration());
  CHECK((a.pose.position - b.pose.position).norm() < 1e-9);
}

TEST_CASE("invalid lidar models are rejected") {
  LidarModel m;
  m.rate_hz = 0.0;
  CHECK_THROWS_AS(m.validate(), RejectedInput);
  m = LidarModel{};
  m.rings = 0;
  CHECK_THROWS_AS(m.validate(), RejectedInput);
}
