// mocap: simulate walking datasets, smooth them, compare estimates and time
// the inner QP.
//
// Exit codes: 0 ok, 2 bad flags, 3 config or data error, 4 not converged or
// above tolerance, 5 solver failure.
//
// MOCAP_VERBOSE=0 silences progress output, 2 prints every SQP iteration.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mocap/bench.hpp"
#include "mocap/io.hpp"
#include "mocap/simulator.hpp"
#include "mocap/sqp.hpp"

#ifndef MOCAP_VERSION
#define MOCAP_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace mocap;

namespace {

enum Exit { kOk = 0, kBadFlags = 2, kDataError = 3, kNotConverged = 4, kSolverFailure = 5 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int verbosity() {
  const char* v = std::getenv("MOCAP_VERBOSE");
  return v ? std::atoi(v) : 1;
}

void info(const std::string& msg) {
  if (verbosity() >= 1) std::cerr << msg << "\n";
}

int fail(int code, const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return code;
}

struct Manifest {
  Json j;
  Clock::time_point start = Clock::now();

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    j["command"] = command;
    j["argv"] = argv;
    j["tool_version"] = MOCAP_VERSION;
    j["wall_seconds"] = Json::object();
  }
  void stage(const std::string& name, double seconds) { j["wall_seconds"][name] = seconds; }
  void write(const fs::path& dir) {
    stage("total", seconds_since(start));
    fs::create_directories(dir);
    write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
  }
};

Json settings_json(const SqpSettings& s) {
  return {{"max_iterations", s.max_iterations},
          {"kkt_tolerance", s.kkt_tolerance},
          {"constraint_tolerance", s.constraint_tolerance},
          {"backtrack", s.backtrack},
          {"max_halvings", s.max_halvings},
          {"armijo", s.armijo},
          {"penalty_factor", s.penalty_factor},
          {"threads", s.tree.threads},
          {"downward", s.tree.downward == qp::DownwardMode::Proximal ? "proximal" : "fix"},
          {"proximal_weight", s.tree.proximal_weight},
          {"dense_cap", s.dense_cap}};
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config;
  double duration = 37.2;
  double rate = 10.0;
  std::uint64_t seed = 1;
  double noise_scale = 1.0;
  double bias = 0.02;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  Manifest manifest("simulate", argv);
  ChainConfig cfg;
  GaitParams gait;
  gait.duration = a.duration;
  gait.rate = a.rate;
  try {
    cfg = a.config.empty() ? lower_body_config() : load_chain_config(a.config);
    gait.validate();
  } catch (const ConfigError& e) {
    return fail(kDataError, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kBadFlags, e.what());
  }
  const auto t0 = Clock::now();
  const std::vector<Vec3> biases(cfg.n_segments(), Vec3::Constant(a.bias));
  Dataset ds;
  try {
    ds = simulate(cfg, gait, biases, a.seed, a.noise_scale);
  } catch (const std::invalid_argument& e) {
    return fail(kBadFlags, e.what());
  }
  manifest.stage("simulate", seconds_since(t0));
  try {
    write_dataset(ds, a.out);
  } catch (const std::exception& e) {
    return fail(kDataError, e.what());
  }
  manifest.j["config"] = a.config.empty() ? "<built-in lower body>" : a.config;
  manifest.j["dataset"] = a.out;
  manifest.j["output_dir"] = a.out;
  manifest.j["seed"] = a.seed;
  manifest.j["gait"] = to_json(gait);
  manifest.j["noise_scale"] = a.noise_scale;
  manifest.j["bias"] = a.bias;
  manifest.j["n_steps"] = ds.n_steps();
  manifest.j["n_sensors"] = cfg.n_segments();
  manifest.write(a.out);
  info("wrote " + std::to_string(ds.n_steps()) + " steps x " +
       std::to_string(cfg.n_segments()) + " sensors to " + a.out);
  return kOk;
}

// ------------------------------------------------------------------- solve

struct SolveArgs {
  std::string data;
  std::string ordering = "time";
  std::string solver = "mp";
  int max_iter = 50;
  double tol = 1e-6;
  double constraint_tol = 1e-8;
  int threads = 1;
  long dense_cap = qp::kDenseSizeCap;
  std::string downward = "fix";
  double proximal_weight = 1.0;
  std::string out;
};

int cmd_solve(const SolveArgs& a, const std::vector<std::string>& argv) {
  Manifest manifest("solve", argv);
  SqpSettings settings;
  try {
    settings.ordering = parse_ordering(a.ordering);
    settings.solver = parse_inner_solver(a.solver);
  } catch (const std::invalid_argument& e) {
    return fail(kBadFlags, e.what());
  }
  settings.max_iterations = a.max_iter;
  settings.kkt_tolerance = a.tol;
  settings.constraint_tolerance = a.constraint_tol;
  settings.tree.threads = a.threads;
  settings.tree.downward = a.downward == "proximal" ? qp::DownwardMode::Proximal
                                                    : qp::DownwardMode::FixSeparator;
  settings.tree.proximal_weight = a.proximal_weight;
  settings.dense_cap = a.dense_cap;

  auto t0 = Clock::now();
  Dataset ds;
  try {
    ds = read_dataset(a.data);
  } catch (const std::exception& e) {
    return fail(kDataError, e.what());
  }
  manifest.stage("read", seconds_since(t0));
  const MotionData data = ds.motion_data();
  info("solving " + std::to_string(data.n_steps()) + " steps x " +
       std::to_string(data.n_sensors()) + " sensors, ordering " + a.ordering + ", solver " +
       a.solver);

  t0 = Clock::now();
  SmootherEstimate est;
  try {
    est = sqp_solve(data, settings, std::nullopt, [](const IterationLog& it) {
      if (verbosity() < 2) return;
      std::fprintf(stderr, "k=%-3d cost=%.9e gap=%.3e kkt=%.3e step=%.3e alpha=%g qp=%.3fs\n",
                   it.iteration, it.cost, it.constraint_violation, it.kkt_residual,
                   it.step_norm, it.step_length, it.qp_seconds);
    });
  } catch (const QpSolveError& e) {
    return fail(kSolverFailure, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kDataError, e.what());
  }
  manifest.stage("solve", seconds_since(t0));

  try {
    write_estimate(est, data, a.out);
  } catch (const std::exception& e) {
    return fail(kDataError, e.what());
  }
  manifest.j["dataset"] = a.data;
  manifest.j["config"] = (fs::path(a.data) / "dataset.json").string();
  manifest.j["ordering"] = a.ordering;
  manifest.j["solver"] = a.solver;
  manifest.j["settings"] = settings_json(settings);
  manifest.j["seed"] = ds.seed;
  manifest.j["output_dir"] = a.out;
  manifest.j["status"] = to_string(est.status);
  manifest.write(a.out);

  std::ostringstream os;
  os << "status " << to_string(est.status) << " after " << est.iterations
     << " iterations: cost " << est.cost << ", joint gap " << est.constraint_violation
     << " m, kkt " << est.kkt_residual;
  info(os.str());
  return est.converged() ? kOk : kNotConverged;
}

// ----------------------------------------------------------------- compare

struct CompareArgs {
  std::string a, b;
  double tol = 1e-6;
  std::string out;
};

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
  EstimateFiles ea, eb;
  try {
    ea = read_estimate(a.a);
    eb = read_estimate(a.b);
  } catch (const std::exception& e) {
    return fail(kDataError, e.what());
  }
  EstimateDiff diff;
  try {
    diff = compare_estimates(ea, eb);
  } catch (const std::invalid_argument& e) {
    return fail(kDataError, e.what());
  }
  Json report = to_json(diff);
  report["a"] = a.a;
  report["b"] = a.b;
  report["tolerance"] = a.tol;
  report["within_tolerance"] = diff.worst() <= a.tol;
  std::cout << report.dump(2) << "\n";
  if (!a.out.empty()) {
    Manifest manifest("compare", argv);
    write_file_atomic(fs::path(a.out) / "compare.json", report.dump(2) + "\n");
    manifest.j["output_dir"] = a.out;
    manifest.write(a.out);
  }
  return diff.worst() <= a.tol ? kOk : kNotConverged;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
  std::vector<int> nt_list{250, 500, 1000, 2000};
  int ns = 7;
  int repeats = 3;
  int threads = 1;
  std::uint64_t seed = 1;
  std::string ordering = "time";
  std::string out;
};

int cmd_bench(const BenchArgs& a, const std::vector<std::string>& argv) {
  BenchConfig cfg;
  cfg.horizons = a.nt_list;
  cfg.n_sensors = a.ns;
  cfg.repeats = a.repeats;
  cfg.threads = a.threads;
  cfg.seed = a.seed;
  try {
    cfg.ordering = parse_ordering(a.ordering);
  } catch (const std::invalid_argument& e) {
    return fail(kBadFlags, e.what());
  }
  if (a.ns < 2) return fail(kBadFlags, "--ns must be >= 2");
  for (int nt : a.nt_list)
    if (nt < 2) return fail(kBadFlags, "every N_T in --nt-list must be >= 2");

  Manifest manifest("bench", argv);
  std::string csv = "n_steps,mean_qp_seconds,min_qp_seconds,mean_upward_seconds,"
                    "max_non_root_kkt_size,root_kkt_size,n_cliques\n";
  std::vector<double> xs, ys;
  try {
    for (int nt : a.nt_list) {
      const BenchRow r = bench_horizon(cfg, nt);
      std::ostringstream line;
      line << r.n_steps << "," << format_double(r.mean_seconds) << ","
           << format_double(r.min_seconds) << "," << format_double(r.mean_upward_seconds) << ","
           << r.max_non_root_size << "," << r.root_size << "," << r.n_cliques << "\n";
      csv += line.str();
      std::cout << line.str() << std::flush;
      xs.push_back(nt);
      ys.push_back(r.mean_seconds);
    }
  } catch (const qp::SingularCliqueError& e) {
    return fail(kSolverFailure, e.what());
  }
  Json fit_json;
  if (xs.size() >= 2) {
    const LinearFit fit = fit_line(xs, ys);
    std::printf("# slope %.6e s per step, intercept %.6e s, R^2 %.6f\n", fit.slope,
                fit.intercept, fit.r_squared);
    fit_json = {{"slope_seconds_per_step", fit.slope},
                {"intercept_seconds", fit.intercept},
                {"r_squared", fit.r_squared}};
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_file_atomic(fs::path(a.out) / "bench.csv", csv);
    manifest.j["output_dir"] = a.out;
    manifest.j["ordering"] = a.ordering;
    manifest.j["seed"] = a.seed;
    manifest.j["fit"] = fit_json;
    manifest.write(a.out);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Constrained smoothing of inertial motion-capture data"};
  app.set_version_flag("--version", MOCAP_VERSION);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a synthetic walking dataset");
  s->add_option("--config", sim.config, "Chain config (YAML); built-in lower body if omitted")
      ->check(CLI::ExistingFile);
  s->add_option("--duration", sim.duration, "Seconds")->capture_default_str();
  s->add_option("--rate", sim.rate, "Samples per second")->capture_default_str();
  s->add_option("--seed", sim.seed, "Noise seed")->capture_default_str();
  s->add_option("--noise-scale", sim.noise_scale, "Multiplier on every noise sigma")
      ->capture_default_str();
  s->add_option("--bias", sim.bias, "True gyro bias per axis [rad/s]")->capture_default_str();
  s->add_option("--out", sim.out, "Output directory")->required();

  SolveArgs sol;
  auto* v = app.add_subcommand("solve", "Compute the constrained MAP estimate");
  v->add_option("--data", sol.data, "Dataset directory")->required();
  v->add_option("--ordering", sol.ordering, "time | sensor")
      ->check(CLI::IsMember({"time", "sensor"}))
      ->capture_default_str();
  v->add_option("--solver", sol.solver, "mp | dense")
      ->check(CLI::IsMember({"mp", "dense"}))
      ->capture_default_str();
  v->add_option("--max-iter", sol.max_iter, "SQP iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  v->add_option("--tol", sol.tol, "KKT tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  v->add_option("--constraint-tol", sol.constraint_tol, "Joint gap tolerance [m]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  v->add_option("--threads", sol.threads, "Worker threads for the clique waves")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  v->add_option("--dense-cap", sol.dense_cap, "Largest dense KKT order allowed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  v->add_option("--downward", sol.downward, "fix | proximal")
      ->check(CLI::IsMember({"fix", "proximal"}))
      ->capture_default_str();
  v->add_option("--proximal-weight", sol.proximal_weight)->check(CLI::PositiveNumber);
  v->add_option("--out", sol.out, "Output directory")->required();

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Compare two estimates (or an estimate and a dataset's truth)");
  c->add_option("a", cmp.a, "Estimate or dataset directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("b", cmp.b, "Estimate or dataset directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--tol", cmp.tol, "Largest accepted error")->capture_default_str();
  c->add_option("--out", cmp.out, "Also write compare.json here");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time the inner QP over several horizons");
  b->add_option("--nt-list", bench.nt_list, "Comma-separated N_T values")
      ->delimiter(',')
      ->capture_default_str();
  b->add_option("--ns", bench.ns, "Sensors in the chain")->capture_default_str();
  b->add_option("--repeats", bench.repeats)->check(CLI::PositiveNumber)->capture_default_str();
  b->add_option("--threads", bench.threads)->check(CLI::PositiveNumber)->capture_default_str();
  b->add_option("--seed", bench.seed)->capture_default_str();
  b->add_option("--ordering", bench.ordering, "time | sensor")
      ->check(CLI::IsMember({"time", "sensor"}))
      ->capture_default_str();
  b->add_option("--out", bench.out, "Write bench.csv and a manifest here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadFlags;
  }

  try {
    if (*s) return cmd_simulate(sim, args);
    if (*v) return cmd_solve(sol, args);
    if (*c) return cmd_compare(cmp, args);
    if (*b) return cmd_bench(bench, args);
  } catch (const std::exception& e) {
    return fail(kSolverFailure, e.what());
  }
  return kBadFlags;
}
