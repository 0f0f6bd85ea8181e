#include "c2p/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace c2p {

namespace {

using FieldRef = std::variant<double*, int*, std::int64_t*, std::uint64_t*, bool*,
                              MeasurementMode*, UpdatePolicy*>;

struct Field {
  std::string key;
  FieldRef ref;
};

void add_vec(std::vector<Field>& f, const std::string& key, Vec3& v) {
  f.push_back({key + ".x", &v.x()});
  f.push_back({key + ".y", &v.y()});
  f.push_back({key + ".z", &v.z()});
}

// Single source of truth for the file schema.
std::vector<Field> fields_of(AppConfig& c) {
  std::vector<Field> f;
  PipelineConfig& p = c.pipeline;
  f.push_back({"seed", &c.seed});
  f.push_back({"voxel.resolution", &p.voxel.resolution});
  f.push_back({"voxel.max_depth", &p.voxel.max_depth});
  f.push_back({"voxel.planarity_tau", &p.voxel.tau});
  f.push_back({"voxel.min_points", &p.voxel.min_points});
  f.push_back({"window.size", &p.window_size});
  f.push_back({"window.policy", &p.policy});
  f.push_back({"window.min_observations", &p.min_observations});
  f.push_back({"lidar.sigma", &p.lidar_sigma});
  f.push_back({"voxel.outlier_sigma", &p.outlier_sigma});
  f.push_back({"lidar.fit_variance_floor", &p.fit_variance_floor});
  f.push_back({"imu.gyro_noise", &p.imu.gyro_noise});
  f.push_back({"imu.accel_noise", &p.imu.accel_noise});
  f.push_back({"imu.gyro_random_walk", &p.imu.gyro_random_walk});
  f.push_back({"imu.accel_random_walk", &p.imu.accel_random_walk});
  f.push_back({"imu.gravity", &p.imu.gravity});
  add_vec(f, "extrinsic.rotation", p.extrinsic_rotvec);
  add_vec(f, "extrinsic.translation", p.extrinsic_translation);
  f.push_back({"mode.measurement", &p.mode});
  f.push_back({"mode.threads", &p.threads});
  f.push_back({"mode.chi2_gate", &p.chi2_gate});
  f.push_back({"mode.chi2_probability", &p.chi2_probability});
  f.push_back({"init.rotation_sigma", &p.init_rotation_sigma});
  f.push_back({"init.position_sigma", &p.init_position_sigma});
  f.push_back({"init.velocity_sigma", &p.init_velocity_sigma});
  f.push_back({"init.gyro_bias_sigma", &p.init_gyro_bias_sigma});
  f.push_back({"init.accel_bias_sigma", &p.init_accel_bias_sigma});
  f.push_back({"init.biases_from_dataset", &p.init_biases_from_dataset});
  f.push_back({"filter.divergence_trace", &p.divergence_trace});

  SimulationConfig& s = c.simulation;
  add_vec(f, "sim.room.size", s.room.size);
  add_vec(f, "sim.room.min_corner", s.room.min_corner);
  f.push_back({"sim.room.yaw", &s.room.yaw});
  f.push_back({"sim.room.interior_facets", &s.room.interior_facets});
  add_vec(f, "sim.traj.center", s.trajectory.center);
  f.push_back({"sim.traj.semi_axis_x", &s.trajectory.semi_axis_x});
  f.push_back({"sim.traj.semi_axis_y", &s.trajectory.semi_axis_y});
  f.push_back({"sim.traj.loops", &s.trajectory.loops});
  f.push_back({"sim.traj.length", &s.trajectory.target_length});
  f.push_back({"sim.traj.mean_speed", &s.trajectory.mean_speed});
  f.push_back({"sim.traj.z_amplitude", &s.trajectory.z_amplitude});
  f.push_back({"sim.traj.z_cycles_per_loop", &s.trajectory.z_cycles_per_loop});
  f.push_back({"sim.traj.yaw_amplitude", &s.trajectory.yaw_amplitude});
  f.push_back({"sim.traj.yaw_cycles_per_loop", &s.trajectory.yaw_cycles_per_loop});
  f.push_back({"sim.traj.tilt_amplitude", &s.trajectory.tilt_amplitude});
  f.push_back({"sim.lidar.rings", &s.lidar.rings});
  f.push_back({"sim.lidar.vertical_resolution_deg", &s.lidar.vertical_resolution_deg});
  f.push_back({"sim.lidar.horizontal_resolution_deg", &s.lidar.horizontal_resolution_deg});
  f.push_back({"sim.lidar.rate_hz", &s.lidar.rate_hz});
  f.push_back({"sim.lidar.range_noise", &s.lidar.range_noise});
  f.push_back({"sim.lidar.max_range", &s.lidar.max_range});
  f.push_back({"sim.lidar.min_range", &s.lidar.min_range});
  f.push_back({"sim.imu.rate_hz", &s.imu.rate_hz});
  f.push_back({"sim.imu.gyro_noise", &s.imu.noise.gyro_noise});
  f.push_back({"sim.imu.accel_noise", &s.imu.noise.accel_noise});
  f.push_back({"sim.imu.gyro_random_walk", &s.imu.noise.gyro_random_walk});
  f.push_back({"sim.imu.accel_random_walk", &s.imu.noise.accel_random_walk});
  f.push_back({"sim.imu.gravity", &s.imu.noise.gravity});
  f.push_back({"sim.imu.gyro_bias_init", &s.imu.gyro_bias_init});
  f.push_back({"sim.imu.accel_bias_init", &s.imu.accel_bias_init});
  f.push_back({"sim.noise_free", &s.noise_free});
  return f;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view v, T& out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size();
}

bool parse_value(std::string_view v, const FieldRef& ref) {
  return std::visit(
      [&](auto* ptr) -> bool {
        using T = std::remove_pointer_t<decltype(ptr)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1") return *ptr = true, true;
          if (v == "false" || v == "0") return *ptr = false, true;
          return false;
        } else if constexpr (std::is_same_v<T, MeasurementMode>) {
          if (v == "cluster") return *ptr = MeasurementMode::kCluster, true;
          if (v == "point") return *ptr = MeasurementMode::kPoint, true;
          return false;
        } else if constexpr (std::is_same_v<T, UpdatePolicy>) {
          if (v == "sliding") return *ptr = UpdatePolicy::kSliding, true;
          if (v == "chunked") return *ptr = UpdatePolicy::kChunked, true;
          if (v == "consume") return *ptr = UpdatePolicy::kConsume, true;
          return false;
        } else {
          return parse_number(v, *ptr);
        }
      },
      ref);
}

std::string format_value(const FieldRef& ref) {
  return std::visit(
      [](auto* ptr) -> std::string {
        using T = std::remove_pointer_t<decltype(ptr)>;
        if constexpr (std::is_same_v<T, bool>) {
          return *ptr ? "true" : "false";
        } else if constexpr (std::is_same_v<T, MeasurementMode> ||
                             std::is_same_v<T, UpdatePolicy>) {
          return to_string(*ptr);
        } else {
          return fmt::format("{}", *ptr);
        }
      },
      ref);
}

}  // namespace

const char* to_string(MeasurementMode m) {
  return m == MeasurementMode::kCluster ? "cluster" : "point";
}

const char* to_string(UpdatePolicy p) {
  switch (p) {
    case UpdatePolicy::kSliding: return "sliding";
    case UpdatePolicy::kChunked: return "chunked";
    case UpdatePolicy::kConsume: break;
  }
  return "consume";
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(voxel.resolution > 0)) fail("voxel.resolution must be > 0");
  if (voxel.max_depth < 0 || voxel.max_depth > 8) fail("voxel.max_depth must be in [0, 8]");
  if (!(voxel.tau > 0 && voxel.tau < 1)) fail("voxel.planarity_tau must be in (0, 1)");
  if (voxel.min_points < 4) fail("voxel.min_points must be >= 4");
  if (window_size < 2) fail("window.size must be >= 2");
  if (min_observations < 1 || min_observations > window_size) {
    fail("window.min_observations must be in [1, window.size]");
  }
  if (!(lidar_sigma > 0)) fail("lidar.sigma must be > 0");
  if (!(outlier_sigma >= 0)) fail("voxel.outlier_sigma must be >= 0");
  if (threads < 1) fail("mode.threads must be >= 1");
  if (!(chi2_probability > 0 && chi2_probability < 1)) fail("mode.chi2_probability must be in (0, 1)");
  if (!(init_rotation_sigma > 0 && init_position_sigma > 0 && init_velocity_sigma > 0 &&
        init_gyro_bias_sigma > 0 && init_accel_bias_sigma > 0)) {
    fail("init sigmas must be > 0");
  }
  if (!(divergence_trace > 0)) fail("filter.divergence_trace must be > 0");
  try {
    imu.validate();
  } catch (const std::exception& e) {
    fail(e.what());
  }
}

AppConfig parse_config(std::istream& in, const std::string& source) {
  AppConfig c;
  std::map<std::string, FieldRef, std::less<>> index;
  for (Field& f : fields_of(c)) index.emplace(f.key, f.ref);

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source, line_no));
    }
    const std::string_view key = trim(s.substr(0, eq));
    const std::string_view value = trim(s.substr(eq + 1));
    auto it = index.find(key);
    if (it == index.end()) {
      throw ConfigError(fmt::format("{}:{}: unknown key '{}'", source, line_no, key));
    }
    if (!parse_value(value, it->second)) {
      throw ConfigError(fmt::format("{}:{}: invalid value '{}' for '{}'", source, line_no, value, key));
    }
  }
  try {
    c.pipeline.validate();
    c.simulation.lidar.validate();
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("{}: {}", source, e.what()));
  }
  return c;
}

AppConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  return parse_config(in, file.string());
}

void write_config(std::ostream& out, const AppConfig& config) {
  AppConfig copy = config;
  out << "# c2p configuration. Noise values are continuous-time densities (SI units);\n"
         "# lidar.sigma and sim.lidar.range_noise are range standard deviations in meters.\n";
  for (const Field& f : fields_of(copy)) fmt::print(out, "{} = {}\n", f.key, format_value(f.ref));
}

bool operator==(const AppConfig& a, const AppConfig& b) {
  std::ostringstream sa, sb;
  write_config(sa, a);
  write_config(sb, b);
  return sa.str() == sb.str();
}

}  // namespace c2p
