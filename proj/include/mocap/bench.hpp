#pragma once

// Inner-QP timing over a range of horizon lengths, shared by `mocap bench`
// and the acceptance checks.

#include <cstdint>
#include <vector>

#include "mocap/sqp.hpp"

namespace mocap {

struct BenchConfig {
  std::vector<int> horizons{250, 500, 1000, 2000};  // N_T values
  int n_sensors = 7;  // 7 uses the lower-body chain, other values a straight chain
  int repeats = 3;
  int threads = 1;
  std::uint64_t seed = 1;
  Ordering ordering = Ordering::TimeOrdered;
};

struct BenchRow {
  int n_steps = 0;
  double mean_seconds = 0.0;  // solve_tree_qp, assembly excluded
  double min_seconds = 0.0;
  double mean_upward_seconds = 0.0;
  int max_non_root_size = 0;
  int root_size = 0;
  int n_cliques = 0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y ≈ slope·x + intercept.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Gauss-Newton QP at the dead-reckoning initialization of a simulated walk.
AssembledQp benchmark_qp(int n_sensors, int n_steps, std::uint64_t seed,
                         Ordering ordering = Ordering::TimeOrdered);

BenchRow bench_horizon(const BenchConfig& cfg, int n_steps);
std::vector<BenchRow> run_bench(const BenchConfig& cfg);

}  // namespace mocap
