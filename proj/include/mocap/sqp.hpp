#pragma once

// SQP smoother: Gauss-Newton QP per iterate, solved by clique message passing
// or by the dense oracle, with ℓ1-merit backtracking.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocap/assembly.hpp"
#include "mocap/qp/message_passing.hpp"

namespace mocap {

enum class InnerSolver { MessagePassing, Dense };

const char* to_string(InnerSolver s);
InnerSolver parse_inner_solver(const std::string& s);  // "mp" | "dense"

struct SqpSettings {
  int max_iterations = 50;
  double kkt_tolerance = 1e-6;         // ‖∇F + J_cᵀλ‖∞
  double constraint_tolerance = 1e-8;  // max joint gap [m]
  double backtrack = 0.5;
  int max_halvings = 20;
  double armijo = 1e-4;
  double penalty_factor = 10.0;  // ρ = factor · ‖λ‖∞
  // When the full step is rejected, retry once with the joint rows shifted by
  // the gap at the trial point before backtracking.
  bool second_order_correction = true;
  Ordering ordering = Ordering::TimeOrdered;
  InnerSolver solver = InnerSolver::MessagePassing;
  qp::TreeQpOptions tree;
  long dense_cap = qp::kDenseSizeCap;
};

enum class SqpStatus { Converged, MaxIterations, LineSearchFailed };
const char* to_string(SqpStatus s);

struct IterationLog {
  int iteration = 0;
  double cost = 0.0;
  double constraint_violation = 0.0;  // max |c| before the step
  double kkt_residual = 0.0;          // ‖∇F + J_cᵀλ‖∞ before the step
  double step_norm = 0.0;             // ‖α p‖∞ of the accepted step
  double step_length = 0.0;           // α
  int halvings = 0;
  bool corrected = false;             // second-order correction accepted
  double merit = 0.0;
  double penalty = 0.0;
  double consensus_deviation = 0.0;
  double qp_seconds = 0.0;
  int max_factorization_size = 0;
};

struct SmootherEstimate {
  Trajectory x;
  SqpStatus status = SqpStatus::MaxIterations;
  int iterations = 0;
  double cost = 0.0;
  double constraint_violation = 0.0;
  double kkt_residual = 0.0;
  std::vector<Vec3> joint_multipliers;
  std::vector<IterationLog> log;
  Ordering ordering = Ordering::TimeOrdered;
  InnerSolver solver = InnerSolver::MessagePassing;

  bool converged() const { return status == SqpStatus::Converged; }
};

/// Raised when the inner QP cannot be solved (singular clique, dense cap).
class QpSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solves one Gauss-Newton QP at x.
QpStep solve_qp_step(const AssembledQp& qp, const SqpSettings& settings);

/// Gyro dead-reckoning from the prior orientations with zero bias, segments
/// placed by forward kinematics from the designated segment at the origin,
/// zero velocities.
Trajectory initialize_trajectory(const MotionData& data);

/// `on_iteration` sees every log entry as soon as it is complete.
SmootherEstimate sqp_solve(const MotionData& data, const SqpSettings& settings,
                           std::optional<Trajectory> initial = std::nullopt,
                           const std::function<void(const IterationLog&)>& on_iteration = {});

}  // namespace mocap
