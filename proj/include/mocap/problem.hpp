#pragma once

// The full constrained MAP problem over a trajectory: measurement data,
// residual evaluation and global (monolithic) quantities used by the SQP
// driver for globalization and convergence checks.

#include <vector>

#include "mocap/residuals.hpp"

namespace mocap {

/// Measurements and prior means needed to pose the problem.
struct MotionData {
  ChainConfig config;
  std::vector<std::vector<ImuSample>> samples;  // [t][sensor]
  std::vector<SensorState> prior_mean;          // x_1 prior mean per sensor

  int n_steps() const { return static_cast<int>(samples.size()); }
  int n_sensors() const { return config.n_segments(); }
};

enum class CostKind { Dynamics, Placement, InitialPrior, BiasPrior };

/// Where a cost term came from; assemblies use it to pick a clique.
struct CostTag {
  CostKind kind;
  int sensor;
  int time;  // step of the term (bias copy index for BiasPrior)
};

struct TaggedResidual {
  CostTag tag;
  Residual residual;
};

struct Linearization {
  std::vector<TaggedResidual> costs;
  std::vector<Residual> joints;  // joints[t * n_joints + j]
  int n_steps = 0;
  int n_joints = 0;

  const Residual& joint(int t, int j) const { return joints[t * n_joints + j]; }
};

/// Evaluates every residual at x. `bias_copies` replicates the bias prior
/// (1 for the unsplit problem, N_T for the time-ordered reformulation).
Linearization linearize(const Trajectory& x, const MotionData& data,
                        int bias_copies = 1);

/// ½ Σ ‖whitened residual‖².
double total_cost(const Linearization& lin);
double total_cost(const Trajectory& x, const MotionData& data);

/// ‖c(x)‖∞ and ‖c(x)‖₁ over all joint constraints.
double max_constraint_violation(const Linearization& lin);
double l1_constraint_violation(const Linearization& lin);

/// Gradient of the cost in the global tangent layout (bias copies folded).
VectorXd cost_gradient(const Linearization& lin, const TrajectoryLayout& layout);

/// J_c(x)ᵀ λ for joint multipliers laid out like Linearization::joints.
VectorXd constraint_transpose_product(const Linearization& lin,
                                      const std::vector<Vec3>& multipliers,
                                      const TrajectoryLayout& layout);

/// Global column offset of a variable key (bias copies map to one block).
int global_offset(const VarKey& key, const TrajectoryLayout& layout);

/// Checks sample/prior shapes against the configuration.
void validate(const MotionData& data);

}  // namespace mocap
