#include "mocap/bench.hpp"

#include <algorithm>
#include <stdexcept>

#include "mocap/simulator.hpp"

namespace mocap {

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) throw std::invalid_argument("fit_line needs >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line needs distinct x values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  return fit;
}

AssembledQp benchmark_qp(int n_sensors, int n_steps, std::uint64_t seed, Ordering ordering) {
  if (n_steps < 2) throw std::invalid_argument("benchmark needs N_T >= 2");
  const ChainConfig cfg = n_sensors == 7 ? lower_body_config() : straight_chain_config(n_sensors);
  GaitParams gait;
  gait.duration = (n_steps - 1) / gait.rate;
  const Dataset ds = simulate(cfg, gait, {}, seed);
  const MotionData data = ds.motion_data();
  return assemble(ordering, initialize_trajectory(data), data);
}

BenchRow bench_horizon(const BenchConfig& cfg, int n_steps) {
  const AssembledQp qp = benchmark_qp(cfg.n_sensors, n_steps, cfg.seed, cfg.ordering);
  qp::TreeQpOptions opt;
  opt.threads = cfg.threads;
  BenchRow row;
  row.n_steps = n_steps;
  row.n_cliques = static_cast<int>(qp.subs.size());
  row.min_seconds = 1e300;
  const int repeats = std::max(1, cfg.repeats);
  for (int r = 0; r < repeats; ++r) {
    const qp::TreeQpSolution sol = qp::solve_tree_qp(qp.subs, qp.tree, opt);
    const double total = sol.upward_seconds + sol.downward_seconds;
    row.mean_seconds += total / repeats;
    row.mean_upward_seconds += sol.upward_seconds / repeats;
    row.min_seconds = std::min(row.min_seconds, total);
    row.max_non_root_size = sol.max_non_root_factorization_size(qp.tree.root);
    row.root_size = sol.root_factorization_size(qp.tree.root);
  }
  return row;
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  std::vector<BenchRow> rows;
  for (int nt : cfg.horizons) rows.push_back(bench_horizon(cfg, nt));
  return rows;
}

}  // namespace mocap
