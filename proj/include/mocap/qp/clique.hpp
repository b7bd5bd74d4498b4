#pragma once

// Equality-constrained QPs coupled along a clique tree:
//
//   minimize   Σ_a ½ z_aᵀ H_a z_a + h_aᵀ z_a + c_a
//   subject to A_a z_a + b_a = 0          for every clique a
//
// where z_a stacks the variable groups of clique a in the listed order.

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mocap::qp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class GroupKind { Generic, State, Parameter };
enum class RowKind { Generic, Joint, Consensus };

struct VariableGroup {
  int id = 0;
  int dim = 0;
  GroupKind kind = GroupKind::Generic;
};

/// Optional provenance of a constraint row, carried through to multipliers.
struct RowTag {
  RowKind kind = RowKind::Generic;
  int time = -1;
  int index = -1;
};

struct CliqueSubproblem {
  int id = 0;
  std::vector<VariableGroup> groups;
  MatrixXd H;
  VectorXd h;
  double constant = 0.0;
  MatrixXd A;  // rows x dim()
  VectorXd b;
  std::vector<RowTag> row_tags;  // empty or one per row of A

  int dim() const;
  int n_constraints() const { return static_cast<int>(A.rows()); }
  /// Column offset of group `id` inside z_a, or -1.
  int offset_of(int group_id) const;
  const VariableGroup* find(int group_id) const;

  double objective(const VectorXd& z) const {
    return 0.5 * z.dot(H * z) + h.dot(z) + constant;
  }

  /// Throws std::invalid_argument if dimensions or symmetry are off.
  void check() const;
};

/// Quadratic value function ½ sᵀ M s + mᵀ s + constant over separator groups.
struct QuadMessage {
  std::vector<VariableGroup> groups;
  MatrixXd M;
  VectorXd m;
  double constant = 0.0;

  int dim() const;
  double evaluate(const VectorXd& s) const {
    return 0.5 * s.dot(M * s) + m.dot(s) + constant;
  }
};

/// Clique tree over cliques 0..n-1 (0-based).
struct CliqueTree {
  int root = 0;
  std::vector<int> parent;  // -1 at the root
  std::vector<std::vector<int>> children;
  /// separators[a] = group ids shared by clique a and its parent, ordered as
  /// in clique a. Filled by attach_separators.
  std::vector<std::vector<int>> separators;

  int size() const { return static_cast<int>(parent.size()); }
  std::vector<int> leaves() const;
};

/// Raised when a local KKT system is singular even after regularization.
class SingularCliqueError : public std::runtime_error {
 public:
  SingularCliqueError(int clique, const std::string& what)
      : std::runtime_error("clique " + std::to_string(clique) + ": " + what),
        clique_(clique) {}
  int clique() const { return clique_; }

 private:
  int clique_;
};

/// Chain tree rooted at `root` (0-based): cliques left of the root point to
/// their right neighbour, cliques right of it to their left neighbour.
CliqueTree build_chain_tree(int n_cliques, int root);

/// Root index r-1 for r = ⌊n_points/2⌋ (1-based) used by chain problems
/// with n_points-1 cliques.
int middle_root(int n_points);

/// Fills tree.separators from the cliques' group lists.
void attach_separators(CliqueTree& tree,
                       const std::vector<CliqueSubproblem>& subs);

/// True when every variable group appears in a connected set of cliques.
bool has_clique_intersection_property(const CliqueTree& tree,
                                      const std::vector<CliqueSubproblem>& subs);

/// Upward schedule: wave[k] lists cliques whose children all lie in earlier
/// waves. The root is alone in the last wave.
std::vector<std::vector<int>> upward_waves(const CliqueTree& tree);

}  // namespace mocap::qp
