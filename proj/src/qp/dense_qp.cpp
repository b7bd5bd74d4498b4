#include "mocap/qp/dense_qp.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mocap/qp/kkt_factorization.hpp"

namespace mocap::qp {
namespace {

std::string describe(const DenseSizes& s, long cap) {
  std::ostringstream os;
  os << "dense KKT system of order " << s.kkt_order() << " (" << s.n
     << " variables, " << s.m << " constraint rows) exceeds the cap of " << cap
     << "; problem size " << s.reported_size() << " = " << s.state_dim
     << " time-varying variables + " << s.joint_rows << " joint constraints";
  return os.str();
}

}  // namespace

DenseSizeError::DenseSizeError(const DenseSizes& s, long cap)
    : std::runtime_error(describe(s, cap)), sizes_(s) {}

DenseSizes dense_sizes(const std::vector<CliqueSubproblem>& subs) {
  DenseSizes s;
  std::map<int, VariableGroup> seen;
  for (const auto& sub : subs) {
    for (const auto& g : sub.groups) {
      auto [it, fresh] = seen.emplace(g.id, g);
      if (!fresh) {
        if (it->second.dim != g.dim)
          throw std::invalid_argument("group " + std::to_string(g.id) +
                                      " has inconsistent dimensions");
        continue;
      }
      s.n += g.dim;
      if (g.kind == GroupKind::State) s.state_dim += g.dim;
      if (g.kind == GroupKind::Parameter) s.parameter_dim += g.dim;
    }
    s.m += sub.n_constraints();
    for (const auto& tag : sub.row_tags) {
      if (tag.kind == RowKind::Joint) ++s.joint_rows;
      if (tag.kind == RowKind::Consensus) ++s.consensus_rows;
    }
  }
  return s;
}

DenseQp assemble_dense(const std::vector<CliqueSubproblem>& subs, long cap) {
  DenseQp qp;
  qp.sizes = dense_sizes(subs);
  if (qp.sizes.kkt_order() > cap) throw DenseSizeError(qp.sizes, cap);

  int next = 0;
  for (const auto& sub : subs)
    for (const auto& g : sub.groups)
      if (qp.offset.emplace(g.id, next).second) {
        qp.groups[g.id] = g;
        next += g.dim;
      }
  const int n = next, m = static_cast<int>(qp.sizes.m);
  qp.H = MatrixXd::Zero(n, n);
  qp.h = VectorXd::Zero(n);
  qp.A = MatrixXd::Zero(m, n);
  qp.b = VectorXd::Zero(m);

  int row = 0;
  for (std::size_t a = 0; a < subs.size(); ++a) {
    const auto& sub = subs[a];
    sub.check();
    std::vector<int> cols;
    for (const auto& g : sub.groups)
      for (int k = 0; k < g.dim; ++k) cols.push_back(qp.offset[g.id] + k);
    qp.H(cols, cols) += sub.H;
    qp.h(cols) += sub.h;
    qp.constant += sub.constant;
    const int rows = sub.n_constraints();
    for (int r = 0; r < rows; ++r) {
      qp.A.row(row + r)(cols) = sub.A.row(r);
      qp.row_tags.push_back(sub.row_tags.empty() ? RowTag{} : sub.row_tags[r]);
      qp.row_origin.emplace_back(static_cast<int>(a), r);
    }
    qp.b.segment(row, rows) = sub.b;
    row += rows;
  }
  return qp;
}

VectorXd DenseQp::stack(const std::map<int, VectorXd>& values) const {
  VectorXd z = VectorXd::Zero(n());
  for (const auto& [id, v] : values) {
    auto it = offset.find(id);
    if (it == offset.end()) throw std::invalid_argument("unknown group " + std::to_string(id));
    z.segment(it->second, v.size()) = v;
  }
  return z;
}

double kkt_relative_residual(const DenseQp& qp, const VectorXd& z, const VectorXd& lambda) {
  VectorXd stat = qp.H * z + qp.h;
  if (qp.m() > 0) stat += qp.A.transpose() * lambda;
  double r = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
  if (qp.m() > 0) r = std::max(r, (qp.A * z + qp.b).cwiseAbs().maxCoeff());
  const double scale =
      std::max(1.0, (qp.h.size() ? qp.h.cwiseAbs().maxCoeff() : 0.0) +
                        (qp.b.size() ? qp.b.cwiseAbs().maxCoeff() : 0.0));
  return r / scale;
}

DenseSolution solve_dense(const DenseQp& qp) {
  const int n = qp.n(), m = qp.m();
  MatrixXd K = MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = qp.H;
  K.bottomLeftCorner(m, n) = qp.A;
  K.topRightCorner(n, m) = qp.A.transpose();
  VectorXd rhs(n + m);
  rhs << -qp.h, -qp.b;

  DenseSolution out;
  auto attempt = [&](const MatrixXd& kkt) {
    const VectorXd w = kkt.partialPivLu().solve(rhs);
    out.z = w.head(n);
    out.lambda = w.tail(m);
    out.relative_residual = w.allFinite()
                                ? kkt_relative_residual(qp, out.z, out.lambda)
                                : std::numeric_limits<double>::infinity();
    return out.relative_residual <= 1e-8;
  };
  if (n + m == 0 || attempt(K)) return out;

  MatrixXd shifted = K;
  shifted.diagonal().head(n).array() += kKktRegularization;
  out.regularized = true;
  if (attempt(shifted)) return out;

  Eigen::FullPivLU<MatrixXd> lu(K);
  const long deficiency = (n + m) - lu.rank();
  throw SingularKktError(deficiency, "dense KKT matrix of order " + std::to_string(n + m) +
                                         " is singular (estimated rank deficiency " +
                                         std::to_string(deficiency) + ")");
}

std::string sparsity_pattern(const DenseQp& qp, int cells) {
  const int n = qp.n(), m = qp.m(), order = n + m;
  if (order == 0) return {};
  cells = std::clamp(cells, 1, order);
  auto entry = [&](int i, int j) {
    if (i < n && j < n) return qp.H(i, j);
    if (i >= n && j < n) return qp.A(i - n, j);
    if (i < n && j >= n) return qp.A(j - n, i);
    return 0.0;
  };
  std::string out;
  for (int bi = 0; bi < cells; ++bi) {
    const int i0 = static_cast<int>(static_cast<long>(bi) * order / cells);
    const int i1 = static_cast<int>(static_cast<long>(bi + 1) * order / cells);
    for (int bj = 0; bj < cells; ++bj) {
      const int j0 = static_cast<int>(static_cast<long>(bj) * order / cells);
      const int j1 = static_cast<int>(static_cast<long>(bj + 1) * order / cells);
      bool nz = false;
      for (int i = i0; i < i1 && !nz; ++i)
        for (int j = j0; j < j1 && !nz; ++j) nz = entry(i, j) != 0.0;
      const bool border = (i0 < n) != (i1 - 1 < n) || (j0 < n) != (j1 - 1 < n);
      out += nz ? '#' : (border ? '+' : '.');
    }
    out += '\n';
  }
  return out;
}

}  // namespace mocap::qp
