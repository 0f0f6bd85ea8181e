#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "c2p/config.hpp"
#include "c2p/dataset_io.hpp"
#include "support/oracles.hpp"

using namespace c2p;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("c2p_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_config(in, "test.conf");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("written configuration parses back to the same values") {
  AppConfig c;
  c.seed = 99;
  c.pipeline.window_size = 7;
  c.pipeline.lidar_sigma = 0.0123456789012345;
  c.pipeline.mode = MeasurementMode::kPoint;
  c.pipeline.policy = UpdatePolicy::kSliding;
  c.pipeline.extrinsic_rotvec = Vec3(0.1, -0.2, 1.0 / 3.0);
  c.pipeline.voxel.tau = 0.02;
  c.simulation.noise_free = true;
  c.simulation.lidar.horizontal_resolution_deg = 0.125;
  std::stringstream ss;
  write_config(ss, c);
  CHECK(parse_config(ss) == c);
  CHECK_FALSE(c == AppConfig{});
}

TEST_CASE("an empty file keeps the defaults") {
  std::istringstream in("# nothing\n\n");
  CHECK(parse_config(in) == AppConfig{});
}

TEST_CASE("unknown keys and bad values name the line") {
  const std::string unknown = error_of("seed = 3\n\nbogus.key = 1\n");
  CHECK(unknown.find("test.conf:3") != std::string::npos);
  CHECK(unknown.find("bogus.key") != std::string::npos);
  CHECK(error_of("seed = 3\nwindow.size = ten\n").find("test.conf:2") != std::string::npos);
  CHECK(error_of("mode.measurement = sideways\n").find("test.conf:1") != std::string::npos);
  CHECK(error_of("no equals sign\n").find("test.conf:1") != std::string::npos);
}

TEST_CASE("invalid values are rejected on validation") {
  PipelineConfig p;
  p.window_size = 1;
  CHECK_THROWS(p.validate());
  p = PipelineConfig{};
  p.chi2_probability = 1.0;
  CHECK_THROWS(p.validate());
  p = PipelineConfig{};
  p.lidar_sigma = -1.0;
  CHECK_THROWS(p.validate());
}

TEST_CASE("dataset directories round trip") {
  TempDir dir("dataset");
  AppConfig c = oracle::short_run_config(3.0, 0.1);
  const Dataset data = simulate_dataset(c.simulation, 5);
  write_dataset(dir.path, data);
  const Dataset back = load_dataset(dir.path);
  REQUIRE(back.imu.size() == data.imu.size());
  for (std::size_t i = 0; i < data.imu.size(); i += 37) {
    CHECK(back.imu[i].timestamp == data.imu[i].timestamp);
    CHECK(back.imu[i].accel == data.imu[i].accel);
    CHECK(back.imu[i].gyro == data.imu[i].gyro);
  }
  REQUIRE(back.scans->size() == data.scans->size());
  const LidarScan a = data.scans->load(2);
  const LidarScan b = back.scans->load(2);
  CHECK(a.timestamp == b.timestamp);
  CHECK(a.points == b.points);
  CHECK(a.offsets == b.offsets);
  REQUIRE(back.groundtruth.size() == data.groundtruth.size());
  CHECK(back.groundtruth.back().pose.position == data.groundtruth.back().pose.position);
  CHECK(back.trajectory_length == data.trajectory_length);
  REQUIRE(back.initial);
  CHECK(back.initial->velocity == data.initial->velocity);
}

TEST_CASE("trajectory and covariance files round trip") {
  TempDir dir("trajectory");
  oracle::Rng rng(91);
  std::vector<TimedPose> poses;
  std::vector<double> stamps;
  std::vector<PoseCovariance> covs;
  for (int i = 0; i < 5; ++i) {
    poses.push_back({0.1 * i, oracle::random_pose(rng)});
    stamps.push_back(0.1 * i);
    covs.push_back(oracle::random_psd(rng, 6));
  }
  write_trajectory_csv(dir.path / "estimate.csv", poses);
  write_covariance_csv(dir.path / "cov.csv", stamps, covs);
  const auto p = read_trajectory_csv(dir.path / "estimate.csv");
  std::vector<double> s;
  const auto c = read_covariance_csv(dir.path / "cov.csv", &s);
  REQUIRE(p.size() == 5);
  REQUIRE(c.size() == 5);
  CHECK(s == stamps);
  for (int i = 0; i < 5; ++i) {
    CHECK(p[i].pose.position == poses[i].pose.position);
    CHECK(p[i].pose.rotation.boxminus(poses[i].pose.rotation).norm() < 1e-15);
    CHECK(c[i] == covs[i]);
  }
}

TEST_CASE("malformed dataset files are reported") {
  TempDir dir("malformed");
  std::ofstream(dir.path / "imu.csv") << "t,gx,gy,gz,ax,ay,az\n0.0,1,2\n";
  CHECK_THROWS_AS(read_imu_csv(dir.path / "imu.csv"), DatasetError);
  CHECK_THROWS_AS(read_imu_csv(dir.path / "missing.csv"), DatasetError);
  CHECK_THROWS_AS(load_dataset(dir.path / "nowhere"), DatasetError);
}
