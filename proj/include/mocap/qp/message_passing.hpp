#pragma once

// Exact solution of chain/tree-coupled equality-constrained QPs by upward
// elimination messages and a downward back-substitution pass.

#include <map>
#include <string>
#include <vector>

#include "mocap/qp/clique.hpp"

namespace mocap::qp {

enum class DownwardMode {
  FixSeparator,  // separator pinned to the parent's values
  Proximal,      // separator pulled toward the parent's values by ½w‖s − s*‖²
};

struct TreeQpOptions {
  int threads = 1;
  DownwardMode downward = DownwardMode::FixSeparator;
  double proximal_weight = 1.0;
};

/// Partial minimization of one clique over its non-separator variables.
/// Keeps the recovery map [e; λ] = −(X s + y) for the downward pass.
struct CliqueElimination {
  QuadMessage message;
  std::vector<int> eliminated;  // coordinates of z_a, in order
  std::vector<int> separator;   // coordinates of z_a, in message order
  // Eliminated values and multipliers are −(X·s + y) for separator value s.
  // X may be kept factored as X·X_right (X_right empty otherwise).
  MatrixXd X, X_right;
  VectorXd y;
  int kkt_size = 0;
  bool regularized = false;
};

struct LocalSolution {
  VectorXd z;       // all of z_a
  VectorXd lambda;  // one per row of A_a
  int kkt_size = 0;
  bool regularized = false;
};

/// Eliminates every group of `sub` not listed in `separator`, after adding
/// the child messages to its cost. Throws SingularCliqueError.
CliqueElimination eliminate(const CliqueSubproblem& sub,
                            const std::vector<const QuadMessage*>& child_msgs,
                            const std::vector<int>& separator);

QuadMessage upward_message(const CliqueSubproblem& sub,
                           const std::vector<const QuadMessage*>& child_msgs,
                           const std::vector<int>& separator);

/// Minimizer of the clique cost plus all child messages under its
/// constraints.
LocalSolution root_solve(const CliqueSubproblem& sub,
                         const std::vector<const QuadMessage*>& child_msgs);

/// Fix-separator recovery from a cached elimination (no factorization).
LocalSolution recover(const CliqueSubproblem& sub, const CliqueElimination& elim,
                      const VectorXd& separator_values);

/// Standalone downward step. `separator_values` stacks the separator groups
/// in the order given by `separator`.
LocalSolution downward_solve(const CliqueSubproblem& sub,
                             const std::vector<const QuadMessage*>& child_msgs,
                             const std::vector<int>& separator,
                             const VectorXd& separator_values,
                             DownwardMode mode = DownwardMode::FixSeparator,
                             double proximal_weight = 1.0);

struct CliqueReport {
  int clique = 0;
  int wave = 0;
  int kkt_size = 0;      // order of the factorized matrix
  int n_eliminated = 0;
  int n_separator = 0;
  int n_constraints = 0;
  bool regularized = false;
  double upward_seconds = 0.0;
  double downward_seconds = 0.0;
};

struct TreeQpSolution {
  std::map<int, VectorXd> values;         // group id -> value (owner copy)
  std::vector<VectorXd> clique_values;    // z_a as seen by each clique
  std::vector<VectorXd> multipliers;      // λ_a per clique
  std::vector<double> clique_objective;   // local objective at z_a
  double objective = 0.0;                 // optimal value read off the root
  double max_kkt_residual = 0.0;
  double max_separator_mismatch = 0.0;
  std::vector<CliqueReport> cliques;
  std::vector<std::vector<int>> waves;
  double upward_seconds = 0.0;
  double downward_seconds = 0.0;

  int max_factorization_size() const;
  int root_factorization_size(int root) const { return cliques.at(root).kkt_size; }
  /// Largest factorization size over every clique other than `root`.
  int max_non_root_factorization_size(int root) const;
  /// z restricted to one group, taken from the clique that produced it.
  const VectorXd& value(int group_id) const { return values.at(group_id); }
};

/// Runs the upward and downward passes. `tree.separators` is filled from the
/// group lists if empty.
TreeQpSolution solve_tree_qp(const std::vector<CliqueSubproblem>& subs,
                             CliqueTree tree, const TreeQpOptions& options = {});

/// JSON text with per-clique sizes, wave schedule and timings.
std::string diagnostics_json(const TreeQpSolution& sol, int root);

}  // namespace mocap::qp
