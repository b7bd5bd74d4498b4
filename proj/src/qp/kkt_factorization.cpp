#include "mocap/qp/kkt_factorization.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <type_traits>
#include <vector>

namespace mocap::qp {

static_assert(std::is_same_v<lapack_int, int>, "LP64 LAPACK expected");

namespace {

bool has_zero_row(const Eigen::MatrixXd& K) {
  for (Eigen::Index j = 0; j < K.cols(); ++j)
    if (K.col(j).cwiseAbs().maxCoeff() == 0.0) return true;  // K is symmetric
  return false;
}

}  // namespace

bool KktFactorization::factorize(const Eigen::MatrixXd& kkt, int n_primal) {
  regularized_ = false;
  ldl_ = kkt;
  // An all-zero row makes K singular whatever the pivoting.
  if (!has_zero_row(ldl_)) {
    const int info = factorize_in_place();
    if (info < 0) return false;
    if (info == 0 && pivot_ratio() >= kNearSingularPivotRatio) return true;
    ldl_ = kkt;
  }
  ldl_.diagonal().head(n_primal).array() += kKktRegularization;
  regularized_ = true;
  if (factorize_in_place() != 0) return false;
  const double ratio = pivot_ratio();
  return std::isfinite(ratio) && ratio > 0.0;
}

int KktFactorization::factorize_in_place() {
  const int n = static_cast<int>(ldl_.rows());
  ipiv_.assign(n, 0);
  e_ = Eigen::VectorXd::Zero(n);
  if (n == 0) return 0;
  // The _work entry points skip LAPACKE's O(n²) NaN scan of the input.
  double query = 0.0;
  LAPACKE_dsytrf_work(LAPACK_COL_MAJOR, 'L', n, ldl_.data(), n, ipiv_.data(), &query, -1);
  std::vector<double> work(std::max<std::size_t>(1, static_cast<std::size_t>(query)));
  const int info = LAPACKE_dsytrf_work(LAPACK_COL_MAJOR, 'L', n, ldl_.data(), n, ipiv_.data(),
                                       work.data(), static_cast<int>(work.size()));
  // Split into unit-lower L (rows already permuted), diag(D) and the
  // subdiagonal of the 2x2 blocks, so the solves can run as Eigen trsm.
  if (info == 0)
    LAPACKE_dsyconv_work(LAPACK_COL_MAJOR, 'L', 'C', n, ldl_.data(), n, ipiv_.data(), e_.data());
  return info;
}

// Smallest over largest eigenvalue magnitude of the block-diagonal D.
double KktFactorization::pivot_ratio() const {
  const int n = static_cast<int>(ldl_.rows());
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int k = 0; k < n;) {
    if (ipiv_[k] > 0) {
      const double d = std::abs(ldl_(k, k));
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      k += 1;
    } else {
      const double a = ldl_(k, k), b = e_(k), c = ldl_(k + 1, k + 1);
      const double mid = 0.5 * (a + c);
      const double rad = std::hypot(0.5 * (a - c), b);
      const double l1 = std::abs(mid + rad), l2 = std::abs(mid - rad);
      lo = std::min({lo, l1, l2});
      hi = std::max({hi, l1, l2});
      k += 2;
    }
  }
  if (n == 0) return 1.0;
  if (!(hi > 0.0) || !std::isfinite(hi) || !std::isfinite(lo)) return 0.0;
  return lo / hi;
}

// A = P L D Lᵀ Pᵀ with P the interchange sequence in ipiv (1-based).
void KktFactorization::solve_in_place(Eigen::MatrixXd& rhs) const {
  const int n = size();
  if (n == 0 || rhs.cols() == 0) return;
  for (int k = 0; k < n;) {
    if (ipiv_[k] > 0) {
      if (ipiv_[k] - 1 != k) rhs.row(k).swap(rhs.row(ipiv_[k] - 1));
      k += 1;
    } else {
      const int kp = -ipiv_[k + 1] - 1;
      if (kp == -ipiv_[k] - 1) rhs.row(k + 1).swap(rhs.row(kp));
      k += 2;
    }
  }
  const auto L = ldl_.triangularView<Eigen::UnitLower>();
  L.solveInPlace(rhs);
  for (int k = 0; k < n;) {
    if (ipiv_[k] > 0) {
      rhs.row(k) /= ldl_(k, k);
      k += 1;
    } else {
      const double a = ldl_(k, k), b = e_(k), c = ldl_(k + 1, k + 1);
      const double det = a * c - b * b;
      const Eigen::RowVectorXd r0 = rhs.row(k), r1 = rhs.row(k + 1);
      rhs.row(k) = (c * r0 - b * r1) / det;
      rhs.row(k + 1) = (a * r1 - b * r0) / det;
      k += 2;
    }
  }
  L.transpose().solveInPlace(rhs);
  for (int k = n - 1; k >= 0;) {
    if (ipiv_[k] > 0) {
      if (ipiv_[k] - 1 != k) rhs.row(k).swap(rhs.row(ipiv_[k] - 1));
      k -= 1;
    } else {
      const int kp = -ipiv_[k] - 1;
      if (kp == -ipiv_[k - 1] - 1) rhs.row(k).swap(rhs.row(kp));
      k -= 2;
    }
  }
}

Eigen::MatrixXd KktFactorization::solve(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXd x = rhs;
  solve_in_place(x);
  return x;
}

Eigen::VectorXd KktFactorization::solve(const Eigen::VectorXd& rhs) const {
  Eigen::MatrixXd x = rhs;
  solve_in_place(x);
  return x.col(0);
}

}  // namespace mocap::qp

// Level-3 product used by the blocked dsytrf, served by Eigen. With the
// static reference LAPACK this definition wins over the unoptimized
// reference dgemm at link time.
extern "C" void dgemm_(const char* transa, const char* transb, const int* m, const int* n,
                       const int* k, const double* alpha, const double* a, const int* lda,
                       const double* b, const int* ldb, const double* beta, double* c,
                       const int* ldc, std::size_t, std::size_t) {
  using Stride = Eigen::OuterStride<>;
  using ConstMap = Eigen::Map<const Eigen::MatrixXd, 0, Stride>;
  if (*m == 0 || *n == 0) return;
  const bool ta = *transa != 'N' && *transa != 'n';
  const bool tb = *transb != 'N' && *transb != 'n';
  const ConstMap A(a, ta ? *k : *m, ta ? *m : *k, Stride(*lda));
  const ConstMap B(b, tb ? *n : *k, tb ? *k : *n, Stride(*ldb));
  Eigen::Map<Eigen::MatrixXd, 0, Stride> C(c, *m, *n, Stride(*ldc));
  if (*beta == 0.0)
    C.setZero();
  else if (*beta != 1.0)
    C *= *beta;
  if (*k == 0 || *alpha == 0.0) return;
  if (!ta && !tb)
    C.noalias() += *alpha * A * B;
  else if (ta && !tb)
    C.noalias() += *alpha * A.transpose() * B;
  else if (!ta && tb)
    C.noalias() += *alpha * A * B.transpose();
  else
    C.noalias() += *alpha * A.transpose() * B.transpose();
}

// Panel updates in dlasyf, same arrangement as dgemm_.
extern "C" void dgemv_(const char* trans, const int* m, const int* n, const double* alpha,
                       const double* a, const int* lda, const double* x, const int* incx,
                       const double* beta, double* y, const int* incy, std::size_t) {
  using Stride = Eigen::OuterStride<>;
  if (*m == 0 || *n == 0) return;
  const bool t = *trans != 'N' && *trans != 'n';
  const int lx = t ? *m : *n, ly = t ? *n : *m;
  const Eigen::Map<const Eigen::MatrixXd, 0, Stride> A(a, *m, *n, Stride(*lda));
  // Negative increments walk the vector backwards from its far end.
  const double* x0 = *incx < 0 ? x - (lx - 1) * static_cast<std::ptrdiff_t>(*incx) : x;
  double* y0 = *incy < 0 ? y - (ly - 1) * static_cast<std::ptrdiff_t>(*incy) : y;
  const Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<>> X(x0, lx, Eigen::InnerStride<>(*incx));
  Eigen::Map<Eigen::VectorXd, 0, Eigen::InnerStride<>> Y(y0, ly, Eigen::InnerStride<>(*incy));
  if (*beta == 0.0)
    Y.setZero();
  else if (*beta != 1.0)
    Y *= *beta;
  if (*alpha == 0.0) return;
  if (t)
    Y.noalias() += *alpha * A.transpose() * X;
  else
    Y.noalias() += *alpha * A * X;
}
