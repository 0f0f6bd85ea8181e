#include "c2p/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

namespace c2p {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("cannot open " + file.string());
  return in;
}

// Reads comma-separated numeric rows, skipping '#' comments and a header line.
template <typename RowFn>
void for_each_row(const fs::path& file, std::size_t columns, RowFn&& fn) {
  std::ifstream in = open_in(file);
  std::string line;
  std::vector<double> row;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (line.find_first_of("abcdefghijklmnopqrstuvwxyz") != std::string::npos) continue;
    }
    row.clear();
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        throw DatasetError(fmt::format("{}:{}: malformed number", file.string(), line_no));
      }
      row.push_back(v);
      p = next;
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p < end) {
        if (*p != ',') throw DatasetError(fmt::format("{}:{}: expected ','", file.string(), line_no));
        ++p;
      }
    }
    if (row.size() != columns) {
      throw DatasetError(fmt::format("{}:{}: expected {} columns, got {}", file.string(), line_no,
                                     columns, row.size()));
    }
    fn(row);
  }
}

Pose pose_from(const std::vector<double>& r, std::size_t at) {
  Pose p;
  p.position = Vec3(r[at], r[at + 1], r[at + 2]);
  p.rotation = Rotation(Eigen::Quaterniond(r[at + 3], r[at + 4], r[at + 5], r[at + 6]));
  return p;
}

std::string pose_fields(const Pose& p) {
  const Eigen::Quaterniond& q = p.rotation.quaternion();
  return fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", p.position.x(),
                     p.position.y(), p.position.z(), q.w(), q.x(), q.y(), q.z());
}

class DirectoryScans final : public ScanSource {
 public:
  DirectoryScans(fs::path dir, std::vector<double> stamps)
      : dir_(std::move(dir)), stamps_(std::move(stamps)) {}
  std::size_t size() const override { return stamps_.size(); }
  double timestamp(std::size_t i) const override { return stamps_.at(i); }
  LidarScan load(std::size_t i) const override {
    return read_scan_csv(dir_ / fmt::format("{:04d}.csv", i), stamps_.at(i));
  }

 private:
  fs::path dir_;
  std::vector<double> stamps_;
};

}  // namespace

void write_imu_csv(const fs::path& file, const std::vector<ImuSample>& imu) {
  auto out = fmt::output_file(file.string());
  out.print("t,gx,gy,gz,ax,ay,az\n");
  for (const ImuSample& s : imu) {
    out.print("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", s.timestamp, s.gyro.x(),
              s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z());
  }
}

std::vector<ImuSample> read_imu_csv(const fs::path& file) {
  std::vector<ImuSample> out;
  for_each_row(file, 7, [&](const std::vector<double>& r) {
    out.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!(out[i].timestamp > out[i - 1].timestamp)) {
      throw DatasetError(fmt::format("{}: IMU timestamps not increasing at row {}", file.string(), i));
    }
  }
  return out;
}

void write_scan_csv(const fs::path& file, const LidarScan& scan) {
  auto out = fmt::output_file(file.string());
  out.print("x,y,z,dt\n");
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Vec3& p = scan.points[i];
    out.print("{:.17g},{:.17g},{:.17g},{:.17g}\n", p.x(), p.y(), p.z(), scan.offsets[i]);
  }
}

LidarScan read_scan_csv(const fs::path& file, double timestamp) {
  LidarScan scan;
  scan.timestamp = timestamp;
  for_each_row(file, 4, [&](const std::vector<double>& r) {
    scan.points.emplace_back(r[0], r[1], r[2]);
    scan.offsets.push_back(r[3]);
  });
  return scan;
}

void write_groundtruth_csv(const fs::path& file, const std::vector<GroundTruthSample>& gt) {
  auto out = fmt::output_file(file.string());
  out.print("t,px,py,pz,qw,qx,qy,qz,vx,vy,vz\n");
  for (const GroundTruthSample& g : gt) {
    out.print("{:.17g},{},{:.17g},{:.17g},{:.17g}\n", g.timestamp, pose_fields(g.pose),
              g.velocity.x(), g.velocity.y(), g.velocity.z());
  }
}

std::vector<GroundTruthSample> read_groundtruth_csv(const fs::path& file) {
  std::vector<GroundTruthSample> out;
  for_each_row(file, 11, [&](const std::vector<double>& r) {
    out.push_back({r[0], pose_from(r, 1), Vec3(r[8], r[9], r[10])});
  });
  return out;
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir / "scans");
  write_imu_csv(dir / "imu.csv", data.imu);
  write_groundtruth_csv(dir / "groundtruth.csv", data.groundtruth);
  {
    auto idx = fmt::output_file((dir / "scans.csv").string());
    idx.print("index,t\n");
    if (data.scans) {
      for (std::size_t i = 0; i < data.scans->size(); ++i) {
        idx.print("{},{:.17g}\n", i, data.scans->timestamp(i));
        write_scan_csv(dir / "scans" / fmt::format("{:04d}.csv", i), data.scans->load(i));
      }
    }
  }
  if (data.initial) {
    FilterState s;
    s.nav = *data.initial;
    std::ofstream out(dir / "initial.csv");
    out << state_csv_header(false) << '\n';
    write_state_row(out, s, false);
  }
  auto meta = fmt::output_file((dir / "meta.csv").string());
  meta.print("key,value\ntrajectory_length,{:.17g}\n", data.trajectory_length);
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("dataset directory not found: " + dir.string());
  Dataset d;
  d.imu = read_imu_csv(dir / "imu.csv");
  if (fs::exists(dir / "groundtruth.csv")) d.groundtruth = read_groundtruth_csv(dir / "groundtruth.csv");

  std::vector<double> stamps;
  std::size_t expect = 0;
  for_each_row(dir / "scans.csv", 2, [&](const std::vector<double>& r) {
    if (static_cast<std::size_t>(r[0]) != expect++) throw DatasetError("scans.csv index gap");
    stamps.push_back(r[1]);
  });
  d.scans = std::make_shared<DirectoryScans>(dir / "scans", std::move(stamps));

  if (fs::exists(dir / "initial.csv")) {
    for_each_row(dir / "initial.csv", 17, [&](const std::vector<double>& r) {
      ImuNavState n;
      n.timestamp = r[0];
      const Pose p = pose_from(r, 1);
      n.position = p.position;
      n.orientation = p.rotation;
      n.velocity = Vec3(r[8], r[9], r[10]);
      n.gyro_bias = Vec3(r[11], r[12], r[13]);
      n.accel_bias = Vec3(r[14], r[15], r[16]);
      d.initial = n;
    });
  }
  if (fs::exists(dir / "meta.csv")) {
    std::ifstream in = open_in(dir / "meta.csv");
    std::string line;
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      if (line.substr(0, comma) == "trajectory_length") {
        d.trajectory_length = std::stod(line.substr(comma + 1));
      }
    }
  }
  return d;
}

void write_trajectory_csv(const fs::path& file, const std::vector<TimedPose>& poses) {
  auto out = fmt::output_file(file.string());
  out.print("t,px,py,pz,qw,qx,qy,qz\n");
  for (const TimedPose& p : poses) out.print("{:.17g},{}\n", p.timestamp, pose_fields(p.pose));
}

std::vector<TimedPose> read_trajectory_csv(const fs::path& file) {
  std::vector<TimedPose> out;
  for_each_row(file, 8, [&](const std::vector<double>& r) { out.push_back({r[0], pose_from(r, 1)}); });
  return out;
}

void write_covariance_csv(const fs::path& file, const std::vector<double>& stamps,
                          const std::vector<PoseCovariance>& covs) {
  if (stamps.size() != covs.size()) throw DatasetError("covariance/timestamp count mismatch");
  auto out = fmt::output_file(file.string());
  out.print("t");
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) out.print(",c{}{}", i, j);
  out.print("\n");
  for (std::size_t k = 0; k < covs.size(); ++k) {
    out.print("{:.17g}", stamps[k]);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) out.print(",{:.17g}", covs[k](i, j));
    out.print("\n");
  }
}

std::vector<PoseCovariance> read_covariance_csv(const fs::path& file, std::vector<double>* stamps) {
  std::vector<PoseCovariance> out;
  if (stamps) stamps->clear();
  for_each_row(file, 37, [&](const std::vector<double>& r) {
    PoseCovariance c;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) c(i, j) = r[1 + 6 * i + j];
    out.push_back(c);
    if (stamps) stamps->push_back(r[0]);
  });
  return out;
}

std::vector<TimedPose> to_timed_poses(const std::vector<GroundTruthSample>& gt) {
  std::vector<TimedPose> out;
  out.reserve(gt.size());
  for (const GroundTruthSample& g : gt) out.push_back({g.timestamp, g.pose});
  return out;
}

}  // namespace c2p
