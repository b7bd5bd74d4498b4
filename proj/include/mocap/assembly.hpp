#pragma once

// Gauss-Newton QP of one SQP iteration, split into cliques either along time
// or along the sensor chain:
//
//   minimize   ½‖r̃ + J̃ p‖²   subject to   c + J_c p = 0
//
// with r̃, J̃ the whitened cost residuals and c, J_c the joint constraints,
// all linearized at the current iterate.

#include <map>
#include <vector>

#include "mocap/problem.hpp"
#include "mocap/qp/clique.hpp"
#include "mocap/qp/dense_qp.hpp"

namespace mocap {

enum class Ordering { TimeOrdered, SensorOrdered };

const char* to_string(Ordering o);
Ordering parse_ordering(const std::string& s);  // "time" | "sensor"

struct AssembledQp {
  Ordering ordering = Ordering::TimeOrdered;
  std::vector<qp::CliqueSubproblem> subs;
  qp::CliqueTree tree;  // separators attached
  TrajectoryLayout layout{SliceLayout(0, 0), 0};
  int n_steps = 0;
  int n_sensors = 0;
  int n_joints = 0;

  /// Group ids. Time ordering: one state group per step and one bias copy
  /// per step. Sensor ordering: one state group per sensor (all steps) and
  /// one bias group per sensor.
  int state_group(int k) const { return k; }
  int theta_group(int k) const {
    return (ordering == Ordering::TimeOrdered ? n_steps : n_sensors) + k;
  }
};

/// Cliques over (x_t, θ̄_t, x_{t+1}, θ̄_{t+1}), t = 0..N_T-2, rooted at
/// ⌊N_T/2⌋-1. Needs N_T >= 2.
AssembledQp assemble_time_ordered(const Trajectory& x, const MotionData& data);

/// Cliques over (x^i, θ^i, x^{i+1}, θ^{i+1}), i = 0..N_S-2, rooted at
/// ⌊N_S/2⌋-1. Needs N_S >= 2.
AssembledQp assemble_sensor_ordered(const Trajectory& x, const MotionData& data);

AssembledQp assemble(Ordering ordering, const Trajectory& x, const MotionData& data);

/// Structural size accounting of an assembled problem.
struct ProblemSize {
  StateDimensions dims;
  int n_cliques = 0;
  int root = 0;
  int root_kkt_size = 0;
  int max_non_root_kkt_size = 0;
  std::vector<int> kkt_sizes;  // per clique: eliminated + constraint rows
  qp::DenseSizes dense;
};

ProblemSize problem_size(const AssembledQp& qp);

/// Step in the global tangent layout and the joint multipliers extracted
/// from a solved QP.
struct QpStep {
  VectorXd step;
  std::vector<Vec3> joint_multipliers;  // [t * n_joints + j]
  std::vector<VectorXd> theta_copies;   // time ordering only
  double consensus_deviation = 0.0;
  int max_factorization_size = 0;
  int root_factorization_size = 0;
  double seconds = 0.0;
};

/// Converts per-group values and per-clique multipliers into a QpStep. The
/// bias step is the mean of the copies.
QpStep collect_step(const AssembledQp& qp, const std::map<int, VectorXd>& values,
                    const std::vector<VectorXd>& clique_multipliers);

/// max_t ‖Δθ̄_t − Δθ̄_{t+1}‖∞.
double consensus_check(const std::vector<VectorXd>& theta_copies);

}  // namespace mocap
