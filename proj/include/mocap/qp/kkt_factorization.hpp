#pragma once

#include <vector>

#include <Eigen/Core>

namespace mocap::qp {

/// Diagonal shift added to the Hessian block of a KKT matrix once its
/// factorization turns out (near-)singular. Shared by every solver so that
/// message passing and the dense oracle agree on PSD-singular problems.
inline constexpr double kKktRegularization = 1e-10;

/// Pivot ratio below which a factorization counts as near-singular.
inline constexpr double kNearSingularPivotRatio = 1e-15;

/// Bunch-Kaufman LDLᵀ of a symmetric indefinite KKT matrix [H Aᵀ; A 0]
/// (LAPACK dsytrf), with H of size `n_primal`.
class KktFactorization {
 public:
  /// Factorizes; if the pivots report (near-)singularity, H is shifted by
  /// kKktRegularization·I and refactorized. Returns false when the matrix is
  /// still singular afterwards.
  bool factorize(const Eigen::MatrixXd& kkt, int n_primal);

  int size() const { return static_cast<int>(ldl_.rows()); }
  bool regularized() const { return regularized_; }

  /// Solves K·X = B in place.
  void solve_in_place(Eigen::MatrixXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

 private:
  int factorize_in_place();
  double pivot_ratio() const;

  bool regularized_ = false;
  Eigen::MatrixXd ldl_;  // unit-lower L below the diagonal, 1x1 pivots on it
  std::vector<int> ipiv_;
  Eigen::VectorXd e_;  // subdiagonal of the 2x2 pivots
};

}  // namespace mocap::qp
