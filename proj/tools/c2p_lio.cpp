// Command-line front end: simulate | run | evaluate | mc | ablate.
// Exit codes: 0 ok, 1 bad input, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include "c2p/config.hpp"
#include "c2p/dataset_io.hpp"
#include "c2p/evaluation.hpp"
#include "c2p/pipeline.hpp"
#include "c2p/simulator.hpp"

namespace fs = std::filesystem;
using namespace c2p;

namespace {

constexpr int kOk = 0;
constexpr int kBadInput = 1;
constexpr int kRuntimeFailure = 2;

struct BadInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string estimate;
  std::string mode;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::size_t runs = 20;
};

AppConfig load_app_config(const Options& o) {
  AppConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  if (!o.mode.empty()) {
    if (o.mode == "cluster") c.pipeline.mode = MeasurementMode::kCluster;
    else if (o.mode == "point") c.pipeline.mode = MeasurementMode::kPoint;
    else throw BadInput("--mode must be 'cluster' or 'point'");
  }
  if (o.threads > 0) c.pipeline.threads = o.threads;
  if (o.seed) c.seed = *o.seed;
  return c;
}

void save_config(const fs::path& file, const AppConfig& c) {
  std::ofstream out(file);
  write_config(out, c);
}

void write_report(const fs::path& dir, const MetricsReport& report) {
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "metrics.csv");
    write_metrics_csv(csv, report);
  }
  std::ofstream txt(dir / "summary.txt");
  write_metrics_summary(txt, report);
  write_metrics_summary(std::cout, report);
}

int cmd_simulate(const Options& o) {
  const AppConfig c = load_app_config(o);
  if (o.out.empty()) throw BadInput("--out is required");
  const Dataset d = simulate_dataset(c.simulation, c.seed, c.pipeline.extrinsic());
  write_dataset(o.out, d);
  save_config(fs::path(o.out) / "config.txt", c);
  fmt::print("wrote {} IMU samples, {} scans, trajectory length {:.3f} m to {}\n", d.imu.size(),
             d.scans->size(), d.trajectory_length, o.out);
  return kOk;
}

int cmd_run(const Options& o) {
  if (o.data.empty()) throw BadInput("--data is required");
  const AppConfig c = load_app_config(o);
  const Dataset d = load_dataset(o.data);
  const OdometryResult r = run_odometry(d, c.pipeline);
  const fs::path out = o.out.empty() ? fs::path(o.data) / "output" : fs::path(o.out);
  write_odometry_outputs(out, r);
  save_config(out / "config.txt", c);
  if (!d.groundtruth.empty() && d.trajectory_length > 0) {
    MetricsReport rep;
    rep.runs.push_back(evaluate_run(r, d, "run"));
    rep.aggregate();
    write_report(out, rep);
  }
  if (r.diverged) {
    spdlog::error("estimation diverged: {}", r.failure);
    return kRuntimeFailure;
  }
  return kOk;
}

int cmd_evaluate(const Options& o) {
  if (o.data.empty() || o.estimate.empty()) throw BadInput("--data and --est are required");
  const Dataset d = load_dataset(o.data);
  const fs::path est_dir = o.estimate;
  OdometryResult r;
  r.poses = read_trajectory_csv(est_dir / "estimate.csv");
  r.covariances = read_covariance_csv(est_dir / "pose_covariance.csv");
  MetricsReport rep;
  rep.runs.push_back(evaluate_run(r, d, "run"));
  rep.aggregate();
  write_report(o.out.empty() ? est_dir : fs::path(o.out), rep);
  return kOk;
}

int cmd_mc(const Options& o) {
  const AppConfig c = load_app_config(o);
  if (o.out.empty()) throw BadInput("--out is required");
  if (o.runs < 1) throw BadInput("--runs must be >= 1");
  const fs::path out = o.out;
  const auto runs = monte_carlo_run(c, o.runs, c.seed);
  MetricsReport rep;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path dir = out / fmt::format("run_{:03d}", i);
    write_odometry_outputs(dir, runs[i].odometry);
    std::ofstream(dir / "seed.txt") << runs[i].seed << '\n';
    rep.runs.push_back(runs[i].metrics);
  }
  rep.aggregate();
  save_config(out / "config.txt", c);
  write_report(out, rep);
  return rep.diverged == rep.runs.size() ? kRuntimeFailure : kOk;
}

int cmd_ablate(const Options& o) {
  AppConfig base = load_app_config(o);
  if (o.out.empty()) throw BadInput("--out is required");
  const int par = o.threads > 0 ? o.threads : 8;
  const Dataset d = simulate_dataset(base.simulation, base.seed, base.pipeline.extrinsic());

  struct Variant {
    const char* name;
    MeasurementMode mode;
    int threads;
  };
  const Variant variants[] = {{"cluster_parallel", MeasurementMode::kCluster, par},
                              {"cluster_serial", MeasurementMode::kCluster, 1},
                              {"point_parallel", MeasurementMode::kPoint, par}};
  fs::create_directories(o.out);
  std::ofstream table(fs::path(o.out) / "ablation.csv");
  table << kMetricsSchema << '\n'
        << "variant,mode,threads,frames,t_preprocess_ms,t_association_ms,t_update_ms,t_others_ms,"
           "t_total_ms,avg_n_pl,avg_n_pt,avg_rows,translation_percent\n";
  for (const Variant& v : variants) {
    PipelineConfig pc = base.pipeline;
    pc.mode = v.mode;
    pc.threads = v.threads;
    const OdometryResult r = run_odometry(d, pc);
    StageTimes sum;
    double rows = 0;
    std::size_t updates = 0;
    for (const FrameLog& l : r.logs) {
      sum.preprocess += l.times.preprocess;
      sum.association += l.times.association;
      sum.update += l.times.update;
      sum.others += l.times.others;
      if (l.updated) {
        rows += static_cast<double>(l.rows);
        ++updates;
      }
    }
    const double n = std::max<double>(1.0, static_cast<double>(r.logs.size()));
    const DimensionStats ds = dimension_stats(r.dimension_samples());
    const RunMetrics m = evaluate_run(r, d, v.name);
    fmt::print(table, "{},{},{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.2f},{:.2f},{:.2f},{:.6f}\n",
               v.name, to_string(v.mode), v.threads, r.logs.size(), 1e3 * sum.preprocess / n,
               1e3 * sum.association / n, 1e3 * sum.update / n, 1e3 * sum.others / n,
               1e3 * sum.total() / n, ds.avg_planes, ds.avg_points,
               updates ? rows / static_cast<double>(updates) : 0.0, m.ape.translation_percent);
    fmt::print("{:<18} update {:8.3f} ms/frame  total {:8.3f} ms/frame  N_pl {:8.1f}  N_pt {:9.1f}\n",
               v.name, 1e3 * sum.update / n, 1e3 * sum.total() / n, ds.avg_planes, ds.avg_points);
  }
  save_config(fs::path(o.out) / "config.txt", base);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliding-window LiDAR-inertial odometry with cluster-to-plane measurements"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value configuration file");
    sub->add_option("--threads", o.threads, "worker threads");
    sub->add_option("--mode", o.mode, "measurement model: cluster | point");
    sub->add_option("--seed", o.seed, "master seed");
  };
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  common(sim);
  sim->add_option("--out", o.out, "dataset directory")->required();

  CLI::App* run = app.add_subcommand("run", "estimate a trajectory from a dataset");
  common(run);
  run->add_option("--data", o.data, "dataset directory")->required();
  run->add_option("--out", o.out, "output directory (default: <data>/output)");

  CLI::App* eval = app.add_subcommand("evaluate", "score an estimate against ground truth");
  eval->add_option("--data", o.data, "dataset directory")->required();
  eval->add_option("--est", o.estimate, "directory with estimate.csv and pose_covariance.csv")
      ->required();
  eval->add_option("--out", o.out, "report directory (default: --est)");

  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo: simulate, run and evaluate n seeds");
  common(mc);
  mc->add_option("--runs", o.runs, "number of runs");
  mc->add_option("--out", o.out, "output directory")->required();

  CLI::App* abl = app.add_subcommand("ablate", "timing/dimension comparison of three variants");
  common(abl);
  abl->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadInput;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (run->parsed()) return cmd_run(o);
    if (eval->parsed()) return cmd_evaluate(o);
    if (mc->parsed()) return cmd_mc(o);
    if (abl->parsed()) return cmd_ablate(o);
  } catch (const ConfigError& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kBadInput;
  } catch (const BadInput& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kBadInput;
  } catch (const DatasetError& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kBadInput;
  } catch (const RejectedInput& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kBadInput;
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "failure: {}\n", e.what());
    return kRuntimeFailure;
  }
  return kBadInput;
}
