// Acceptance checks. `acceptance --criterion N` runs one check and prints a
// single PASS/FAIL line; without the flag every check runs in turn.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "mocap/assembly.hpp"
#include "mocap/bench.hpp"
#include "mocap/qp/message_passing.hpp"
#include "mocap/simulator.hpp"
#include "mocap/sqp.hpp"
#include "test_util.hpp"

using namespace mocap;
using namespace mocap::test;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Dataset walk(int n_steps, std::uint64_t seed, double noise_scale, double bias) {
  GaitParams gait;
  gait.duration = (n_steps - 1) / gait.rate;
  const ChainConfig cfg = lower_body_config();
  return simulate(cfg, gait, std::vector<Vec3>(cfg.n_segments(), Vec3::Constant(bias)), seed,
                  noise_scale);
}

// Largest difference over positions, velocities, orientations (rad) and biases.
double trajectory_distance(const Trajectory& a, const Trajectory& b) {
  double d = 0.0;
  for (int t = 0; t < a.n_steps(); ++t) {
    const TimeSlice &sa = a.slices[t], &sb = b.slices[t];
    for (std::size_t i = 0; i < sa.sensors.size(); ++i) {
      d = std::max(d, (sa.sensors[i].position - sb.sensors[i].position).lpNorm<Eigen::Infinity>());
      d = std::max(d, (sa.sensors[i].velocity - sb.sensors[i].velocity).lpNorm<Eigen::Infinity>());
      if (sa.sensors[i].mean_accel && sb.sensors[i].mean_accel)
        d = std::max(d, (*sa.sensors[i].mean_accel - *sb.sensors[i].mean_accel).lpNorm<Eigen::Infinity>());
      d = std::max(d, so3::angle_between(sa.sensors[i].orientation, sb.sensors[i].orientation));
      d = std::max(d, (sa.segments[i].position - sb.segments[i].position).lpNorm<Eigen::Infinity>());
      d = std::max(d, so3::angle_between(sa.segments[i].orientation, sb.segments[i].orientation));
    }
  }
  for (std::size_t i = 0; i < a.params.size(); ++i)
    d = std::max(d, (a.params[i].gyro_bias - b.params[i].gyro_bias).lpNorm<Eigen::Infinity>());
  return d;
}

Outcome dimensions() {
  const AssembledQp qp = benchmark_qp(7, 373, 1, Ordering::TimeOrdered);
  const ProblemSize ps = problem_size(qp);
  std::ostringstream os;
  os << "x " << ps.dims.total_x_dim << ", theta " << ps.dims.theta_dim << ", constraints "
     << ps.dims.constraint_dim << ", agent " << ps.max_non_root_kkt_size << ", root "
     << ps.root_kkt_size << ", dense " << ps.dense.reported_size();
  const bool ok = ps.dims.total_x_dim == 40284 && ps.dims.theta_dim == 21 &&
                  ps.dims.constraint_dim == 6714 && ps.max_non_root_kkt_size == 168 &&
                  ps.root_kkt_size == 315 && ps.dense.reported_size() == 46998;
  return {ok, os.str()};
}

Outcome oracle_equivalence() {
  Rng rng(2024);
  double worst = 0.0;
  const int instances = 120;
  for (int k = 0; k < instances; ++k) {
    // Clique dims 4..12 from two groups of 2..6, 0..3 constraints.
    const ChainQp q = random_chain_qp(rng, uniform_int(rng, 1, 50), 2, 6, 3);
    const qp::TreeQpSolution sol = qp::solve_tree_qp(q.subs, q.tree);
    const qp::DenseQp dense = qp::assemble_dense(q.subs);
    const qp::DenseSolution ref = qp::solve_dense(dense);
    for (const auto& [id, g] : dense.groups)
      worst = std::max(worst, (sol.value(id) - ref.z.segment(dense.offset.at(id), g.dim))
                                  .lpNorm<Eigen::Infinity>());
  }
  std::ostringstream os;
  os << instances << " instances, max diff " << worst;
  return {worst <= 1e-8, os.str()};
}

Outcome noise_free_sqp() {
  const Dataset ds = walk(50, 3, 0.0, 0.0);
  SqpSettings s;
  s.max_iterations = 25;
  const SmootherEstimate est = sqp_solve(ds.motion_data(), s);
  double err = 0.0;
  for (int t = 0; t < ds.n_steps(); ++t)
    for (int i = 0; i < 7; ++i) {
      err = std::max(err, (est.x.slices[t].sensors[i].position - ds.truth.slices[t].sensors[i].position).norm());
      err = std::max(err, (est.x.slices[t].segments[i].position - ds.truth.slices[t].segments[i].position).norm());
    }
  std::ostringstream os;
  os << to_string(est.status) << " after " << est.iterations << " iterations, joint gap "
     << est.constraint_violation << " m, position error " << err << " m";
  return {est.converged() && est.iterations <= 25 && est.constraint_violation <= 1e-8 && err <= 1e-6,
          os.str()};
}

Outcome ordering_equivalence() {
  const Dataset ds = walk(100, 7, 1.0, 0.02);
  const MotionData data = ds.motion_data();
  SqpSettings s;
  const SmootherEstimate a = sqp_solve(data, s);
  s.ordering = Ordering::SensorOrdered;
  const SmootherEstimate b = sqp_solve(data, s);
  const double rel = std::abs(a.cost - b.cost) / std::max(1.0, std::abs(a.cost));
  const double dist = trajectory_distance(a.x, b.x);
  std::ostringstream os;
  os << "costs " << a.cost << " / " << b.cost << " (rel " << rel << "), trajectory diff " << dist
     << ", iterations " << a.iterations << " / " << b.iterations;
  return {rel <= 1e-8 && dist <= 1e-6, os.str()};
}

Outcome linear_scaling() {
  const std::vector<BenchRow> rows = run_bench(BenchConfig{});
  std::vector<double> x, y;
  double t1000 = 0.0, t2000 = 0.0;
  std::ostringstream os;
  for (const auto& r : rows) {
    x.push_back(r.n_steps);
    y.push_back(r.mean_seconds);
    if (r.n_steps == 1000) t1000 = r.mean_seconds;
    if (r.n_steps == 2000) t2000 = r.mean_seconds;
    os << r.n_steps << ":" << r.mean_seconds << "s ";
  }
  const LinearFit fit = fit_line(x, y);
  const double ratio = t2000 / t1000;
  os << "R^2 " << fit.r_squared << ", t(2000)/t(1000) " << ratio;
  return {fit.r_squared >= 0.98 && ratio <= 2.5, os.str()};
}

Outcome parallel_sweep() {
  BenchConfig cfg;
  cfg.repeats = 3;
  const BenchRow one = bench_horizon(cfg, 2000);
  cfg.threads = 2;
  const BenchRow two = bench_horizon(cfg, 2000);
  const double ratio = two.mean_upward_seconds / one.mean_upward_seconds;
  std::ostringstream os;
  os << "upward " << one.mean_upward_seconds << "s (1 thread) vs " << two.mean_upward_seconds
     << "s (2 threads), ratio " << ratio << ", hardware threads "
     << std::thread::hardware_concurrency();
  return {ratio <= 0.65, os.str()};
}

Outcome jacobians() {
  const ChainConfig cfg = lower_body_config();
  const int d = cfg.designated_sensor;
  Rng rng(7);
  double worst = 0.0;
  auto check = [&](const MatrixXd& analytic, const MatrixXd& numeric) {
    worst = std::max(worst, relative_error(analytic, numeric));
  };
  for (int k = 0; k < 100; ++k) {
    const int i = k % 7, j = k % 6, t = 1 + k;
    // Dynamics.
    const SensorState prev = random_sensor(rng, i == d);
    SensorParams p;
    p.gyro_bias = random_vec(rng, 0.2);
    const ImuSample y{random_vec(rng, 3.0), random_vec(rng, 15.0)};
    SensorState curr = random_sensor(rng, i == d);
    curr.orientation = so3::plus(prev.orientation, cfg.dt * (y.gyro - p.gyro_bias) + random_vec(rng, 0.5));
    const Residual dyn = dynamics_residual(prev, curr, p, y, cfg, i, t);
    check(dyn.blocks[0].jacobian, numeric_jacobian<SensorState>(prev, prev.tangent_dim(),
          [&](const SensorState& s) { return dynamics_residual(s, curr, p, y, cfg, i, t).value; }));
    check(dyn.blocks[1].jacobian, numeric_jacobian<SensorState>(curr, curr.tangent_dim(),
          [&](const SensorState& s) { return dynamics_residual(prev, s, p, y, cfg, i, t).value; }));
    check(dyn.blocks[2].jacobian, numeric_jacobian<SensorParams>(p, 3,
          [&](const SensorParams& q) { return dynamics_residual(prev, curr, q, y, cfg, i, t).value; }));
    // Placement.
    const SegmentState seg = random_segment(rng);
    SensorState sen = random_sensor(rng, i == d);
    sen.orientation = so3::plus(seg.orientation * cfg.segments[i].mounting, random_vec(rng, 0.8));
    const Residual pl = placement_residual(sen, seg, cfg, i, 0);
    check(pl.blocks[0].jacobian, numeric_jacobian<SensorState>(sen, sen.tangent_dim(),
          [&](const SensorState& s) { return placement_residual(s, seg, cfg, i, 0).value; }));
    check(pl.blocks[1].jacobian, numeric_jacobian<SegmentState>(seg, 6,
          [&](const SegmentState& s) { return placement_residual(sen, s, cfg, i, 0).value; }));
    // Joint constraint.
    const SegmentState a = random_segment(rng), b = random_segment(rng);
    const Residual jc = joint_constraint(a, b, cfg, j, 0);
    check(jc.blocks[0].jacobian, numeric_jacobian<SegmentState>(a, 6,
          [&](const SegmentState& s) { return joint_constraint(s, b, cfg, j, 0).value; }));
    check(jc.blocks[1].jacobian, numeric_jacobian<SegmentState>(b, 6,
          [&](const SegmentState& s) { return joint_constraint(a, s, cfg, j, 0).value; }));
    // Priors.
    const SensorState mean = random_sensor(rng, i == d);
    SensorState x = mean;
    retract(x, random_vector(rng, x.tangent_dim(), 0.8));
    check(initial_state_prior(x, mean, cfg, i).blocks[0].jacobian,
          numeric_jacobian<SensorState>(x, x.tangent_dim(), [&](const SensorState& s) {
            return initial_state_prior(s, mean, cfg, i).value;
          }));
    check(bias_prior(p, cfg, i, 0, 4).blocks[0].jacobian,
          numeric_jacobian<SensorParams>(p, 3, [&](const SensorParams& q) {
            return bias_prior(q, cfg, i, 0, 4).value;
          }));
  }
  std::ostringstream os;
  os << "500 points over 5 residual types, worst relative error " << worst;
  return {worst <= 1e-5, os.str()};
}

Outcome consensus() {
  const Dataset ds = walk(373, 1, 1.0, 0.02);
  double worst = 0.0;
  int solved = 0;
  SqpSettings s;
  sqp_solve(ds.motion_data(), s, std::nullopt, [&](const IterationLog& it) {
    worst = std::max(worst, it.consensus_deviation);
    ++solved;
  });
  std::ostringstream os;
  os << solved << " QPs, max consensus deviation " << worst;
  return {solved > 0 && worst <= 1e-9, os.str()};
}

Outcome bias_recovery() {
  const int seeds = 5;
  const double bias = 0.02;
  std::vector<std::vector<double>> errors(7);
  for (int seed = 1; seed <= seeds; ++seed) {
    const Dataset ds = walk(373, seed, 1.0, bias);
    const SmootherEstimate est = sqp_solve(ds.motion_data(), SqpSettings{});
    for (int i = 0; i < 7; ++i) {
      const Vec3& truth = ds.truth.params[i].gyro_bias;
      errors[i].push_back((est.x.params[i].gyro_bias - truth).norm() / truth.norm());
    }
  }
  double worst = 0.0;
  std::ostringstream os;
  os << "median relative bias error per sensor:";
  for (auto& e : errors) {
    std::nth_element(e.begin(), e.begin() + seeds / 2, e.end());
    const double med = e[seeds / 2];
    worst = std::max(worst, med);
    os << " " << med;
  }
  return {worst <= 0.3, os.str()};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
  double time_limit;  // seconds, 0 when none
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"dimension bookkeeping", dimensions, 1.0},
      {"oracle equivalence", oracle_equivalence, 30.0},
      {"noise-free SQP", noise_free_sqp, 60.0},
      {"ordering equivalence", ordering_equivalence, 120.0},
      {"linear scaling", linear_scaling, 300.0},
      {"two-sided sweep parallelism", parallel_sweep, 0.0},
      {"Jacobian correctness", jacobians, 30.0},
      {"consensus", consensus, 0.0},
      {"bias recovery", bias_recovery, 0.0},
  };
  bool all_pass = true;
  for (int k = 1; k <= 9; ++k) {
    if (only && k != only) continue;
    const Criterion& c = criteria[k - 1];
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_time = c.time_limit <= 0.0 || secs < c.time_limit;
    const bool pass = out.pass && in_time;
    all_pass = all_pass && pass;
    std::printf("criterion %d %s: %s  %s; runtime %.2fs", k, c.name, pass ? "PASS" : "FAIL",
                out.detail.c_str(), secs);
    if (c.time_limit > 0.0) std::printf(" (limit %.0fs%s)", c.time_limit, in_time ? "" : ", exceeded");
    std::printf("\n");
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
