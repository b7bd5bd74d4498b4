#pragma once

// Monolithic assembly of a clique-decomposed QP and a direct KKT solve.
// Used as the reference solver for the message-passing path.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocap/qp/clique.hpp"

namespace mocap::qp {

/// Default cap on n + m for the dense path.
inline constexpr long kDenseSizeCap = 20000;

struct DenseSizes {
  long n = 0;                // all variables
  long m = 0;                // all constraint rows
  long state_dim = 0;        // variables in State groups
  long parameter_dim = 0;    // variables in Parameter groups
  long joint_rows = 0;       // rows tagged Joint
  long consensus_rows = 0;   // rows tagged Consensus

  long kkt_order() const { return n + m; }
  /// Time-varying variables plus joint constraint rows.
  long reported_size() const { return state_dim + joint_rows; }
};

class DenseSizeError : public std::runtime_error {
 public:
  DenseSizeError(const DenseSizes& s, long cap);
  const DenseSizes& sizes() const { return sizes_; }

 private:
  DenseSizes sizes_;
};

struct DenseQp {
  MatrixXd H;
  VectorXd h;
  double constant = 0.0;
  MatrixXd A;
  VectorXd b;
  std::vector<RowTag> row_tags;
  std::map<int, int> offset;  // group id -> first column
  std::map<int, VariableGroup> groups;
  std::vector<std::pair<int, int>> row_origin;  // (clique, local row)
  DenseSizes sizes;

  int n() const { return static_cast<int>(H.rows()); }
  int m() const { return static_cast<int>(A.rows()); }
  double objective(const VectorXd& z) const {
    return 0.5 * z.dot(H * z) + h.dot(z) + constant;
  }
  /// Scatters per-group values into a global vector.
  VectorXd stack(const std::map<int, VectorXd>& values) const;
};

/// Counts without allocating. Throws std::invalid_argument when a group is
/// listed with different sizes.
DenseSizes dense_sizes(const std::vector<CliqueSubproblem>& subs);

/// Sums the clique costs and stacks their constraints. Groups are numbered
/// in order of first appearance. Throws DenseSizeError above `cap`.
DenseQp assemble_dense(const std::vector<CliqueSubproblem>& subs,
                       long cap = kDenseSizeCap);

struct DenseSolution {
  VectorXd z;
  VectorXd lambda;
  double relative_residual = 0.0;
  bool regularized = false;
};

class SingularKktError : public std::runtime_error {
 public:
  SingularKktError(long rank_deficiency, const std::string& what)
      : std::runtime_error(what), deficiency_(rank_deficiency) {}
  long rank_deficiency() const { return deficiency_; }

 private:
  long deficiency_;
};

/// Solves [H Aᵀ; A 0][z; λ] = [−h; −b] by LU. Falls back to the same
/// ε-shift of H used by the clique solver; throws SingularKktError with an
/// estimated rank deficiency if that does not help.
DenseSolution solve_dense(const DenseQp& qp);

/// ‖KKT residual‖∞ / max(1, ‖h‖∞ + ‖b‖∞).
double kkt_relative_residual(const DenseQp& qp, const VectorXd& z,
                             const VectorXd& lambda);

/// Character grid of the nonzero pattern of [H Aᵀ; A 0], each cell covering a
/// block of roughly (order / cells)² entries.
std::string sparsity_pattern(const DenseQp& qp, int cells = 64);

}  // namespace mocap::qp
