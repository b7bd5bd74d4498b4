#include "mocap/qp/message_passing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "dag_executor.hpp"
#include "json.hpp"
#include "mocap/qp/kkt_factorization.hpp"

namespace mocap::qp {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct LocalCost {
  MatrixXd H;
  VectorXd h;
  double constant;
};

// Clique cost plus the child messages scattered onto its coordinates.
LocalCost merged_cost(const CliqueSubproblem& sub,
                      const std::vector<const QuadMessage*>& child_msgs) {
  LocalCost cost{sub.H, sub.h, sub.constant};
  for (const QuadMessage* msg : child_msgs) {
    std::vector<int> idx;
    idx.reserve(msg->dim());
    for (const auto& g : msg->groups) {
      const int off = sub.offset_of(g.id);
      if (off < 0)
        throw std::invalid_argument("clique " + std::to_string(sub.id) +
                                    " receives a message over unknown group " +
                                    std::to_string(g.id));
      for (int k = 0; k < g.dim; ++k) idx.push_back(off + k);
    }
    cost.H(idx, idx) += msg->M;
    cost.h(idx) += msg->m;
    cost.constant += msg->constant;
  }
  return cost;
}

std::vector<int> coordinates_of(const CliqueSubproblem& sub, const std::vector<int>& group_ids) {
  std::vector<int> idx;
  for (int id : group_ids) {
    const VariableGroup* g = sub.find(id);
    if (!g)
      throw std::invalid_argument("clique " + std::to_string(sub.id) +
                                  " has no group " + std::to_string(id));
    const int off = sub.offset_of(id);
    for (int k = 0; k < g->dim; ++k) idx.push_back(off + k);
  }
  return idx;
}

std::vector<VariableGroup> groups_of(const CliqueSubproblem& sub, const std::vector<int>& ids) {
  std::vector<VariableGroup> out;
  for (int id : ids) out.push_back(*sub.find(id));
  return out;
}

// Minimizes ½zᵀHz + hᵀz + c s.t. Az + b = 0 over all of z.
LocalSolution solve_full(int clique, const MatrixXd& H, const VectorXd& h,
                         const MatrixXd& A, const VectorXd& b) {
  const int n = static_cast<int>(H.rows()), m = static_cast<int>(A.rows());
  MatrixXd K = MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = H;
  K.bottomLeftCorner(m, n) = A;
  K.topRightCorner(n, m) = A.transpose();
  VectorXd rhs(n + m);
  rhs << -h, -b;
  KktFactorization f;
  if (!f.factorize(K, n))
    throw SingularCliqueError(clique, "local KKT matrix of order " +
                                          std::to_string(n + m) +
                                          " is singular after regularization");
  const VectorXd w = f.solve(rhs);
  return {w.head(n), w.tail(m), n + m, f.regularized()};
}

}  // namespace

CliqueElimination eliminate(const CliqueSubproblem& sub,
                            const std::vector<const QuadMessage*>& child_msgs,
                            const std::vector<int>& separator) {
  const LocalCost cost = merged_cost(sub, child_msgs);
  CliqueElimination out;
  out.separator = coordinates_of(sub, separator);
  std::vector<char> is_sep(sub.dim(), 0);
  for (int k : out.separator) is_sep[k] = 1;
  for (int k = 0; k < sub.dim(); ++k)
    if (!is_sep[k]) out.eliminated.push_back(k);

  const auto& E = out.eliminated;
  const auto& S = out.separator;
  const int ne = static_cast<int>(E.size()), ns = static_cast<int>(S.size());
  const int m = sub.n_constraints();
  const Eigen::VectorXi all_rows = Eigen::VectorXi::LinSpaced(m, 0, m - 1);

  MatrixXd K = MatrixXd::Zero(ne + m, ne + m);
  K.topLeftCorner(ne, ne) = cost.H(E, E);
  if (m > 0) {
    K.bottomLeftCorner(m, ne) = sub.A(all_rows, E);
    K.topRightCorner(ne, m) = K.bottomLeftCorner(m, ne).transpose();
  }
  // Right-hand sides [B g] with B = [H_ES; A_S], g = [h_E; b].
  MatrixXd rhs(ne + m, ns + 1);
  rhs.topLeftCorner(ne, ns) = cost.H(E, S);
  rhs.topRightCorner(ne, 1) = cost.h(E);
  if (m > 0) {
    rhs.bottomLeftCorner(m, ns) = sub.A(all_rows, S);
    rhs.bottomRightCorner(m, 1) = sub.b;
  }

  KktFactorization f;
  if (!f.factorize(K, ne))
    throw SingularCliqueError(sub.id, "local KKT matrix of order " +
                                          std::to_string(ne + m) +
                                          " is singular after regularization");
  out.kkt_size = ne + m;
  out.regularized = f.regularized();

  // B is often nonzero on a few rows only (the constraint rows, in the sensor
  // ordering). Then X = K⁻¹[:, R]·B_R needs |R| solves instead of |S|.
  std::vector<int> R;
  for (int r = 0; r < ne + m; ++r)
    if (ns > 0 && rhs.row(r).head(ns).cwiseAbs().maxCoeff() > 0.0) R.push_back(r);
  const auto B = rhs.leftCols(ns);
  const auto g = rhs.col(ns);
  QuadMessage& msg = out.message;
  msg.groups = groups_of(sub, separator);
  if (2 * static_cast<int>(R.size()) < ns) {
    const int nr = static_cast<int>(R.size());
    MatrixXd sol = MatrixXd::Zero(ne + m, nr + 1);
    for (int k = 0; k < nr; ++k) sol(R[k], k) = 1.0;
    sol.col(nr) = g;
    f.solve_in_place(sol);
    out.X_right = B(R, Eigen::all);
    out.X = sol.leftCols(nr);
    out.y = sol.col(nr);
    const MatrixXd ZR = sol.leftCols(nr)(R, Eigen::all);
    msg.M = cost.H(S, S);
    msg.M.noalias() -= out.X_right.transpose() * ZR * out.X_right;
    msg.m = cost.h(S);
    msg.m.noalias() -= out.X_right.transpose() * (out.X.transpose() * g);
  } else {
    MatrixXd sol = rhs;
    f.solve_in_place(sol);
    out.X = sol.leftCols(ns);
    out.y = sol.col(ns);
    msg.M = cost.H(S, S);
    msg.M.noalias() -= B.transpose() * out.X;
    msg.m = cost.h(S) - out.X.transpose() * g;
  }
  msg.M = 0.5 * (msg.M + msg.M.transpose()).eval();
  msg.constant = cost.constant - 0.5 * g.dot(out.y);
  return out;
}

QuadMessage upward_message(const CliqueSubproblem& sub,
                           const std::vector<const QuadMessage*>& child_msgs,
                           const std::vector<int>& separator) {
  return eliminate(sub, child_msgs, separator).message;
}

LocalSolution recover(const CliqueSubproblem& sub, const CliqueElimination& elim,
                      const VectorXd& separator_values) {
  if (separator_values.size() != static_cast<Eigen::Index>(elim.separator.size()))
    throw std::invalid_argument("clique " + std::to_string(sub.id) +
                                ": separator value has wrong length");
  const int ne = static_cast<int>(elim.eliminated.size());
  VectorXd w = -elim.y;
  if (separator_values.size() > 0) {
    if (elim.X_right.size() > 0)
      w.noalias() -= elim.X * (elim.X_right * separator_values);
    else
      w.noalias() -= elim.X * separator_values;
  }
  LocalSolution out;
  out.z = VectorXd::Zero(sub.dim());
  out.z(elim.eliminated) = w.head(ne);
  out.z(elim.separator) = separator_values;
  out.lambda = w.tail(sub.n_constraints());
  out.kkt_size = elim.kkt_size;
  out.regularized = elim.regularized;
  return out;
}

LocalSolution root_solve(const CliqueSubproblem& sub,
                         const std::vector<const QuadMessage*>& child_msgs) {
  return recover(sub, eliminate(sub, child_msgs, {}), VectorXd());
}

LocalSolution downward_solve(const CliqueSubproblem& sub,
                             const std::vector<const QuadMessage*>& child_msgs,
                             const std::vector<int>& separator,
                             const VectorXd& separator_values, DownwardMode mode,
                             double proximal_weight) {
  if (mode == DownwardMode::FixSeparator) {
    const CliqueElimination elim = eliminate(sub, child_msgs, separator);
    return recover(sub, elim, separator_values);
  }
  if (!(proximal_weight > 0.0)) throw std::invalid_argument("proximal weight must be positive");
  LocalCost cost = merged_cost(sub, child_msgs);
  const std::vector<int> S = coordinates_of(sub, separator);
  if (separator_values.size() != static_cast<Eigen::Index>(S.size()))
    throw std::invalid_argument("clique " + std::to_string(sub.id) +
                                ": separator value has wrong length");
  for (std::size_t k = 0; k < S.size(); ++k) cost.H(S[k], S[k]) += proximal_weight;
  cost.h(S) -= proximal_weight * separator_values;
  return solve_full(sub.id, cost.H, cost.h, sub.A, sub.b);
}

int TreeQpSolution::max_factorization_size() const {
  int best = 0;
  for (const auto& c : cliques) best = std::max(best, c.kkt_size);
  return best;
}

int TreeQpSolution::max_non_root_factorization_size(int root) const {
  int best = 0;
  for (const auto& c : cliques)
    if (c.clique != root) best = std::max(best, c.kkt_size);
  return best;
}

TreeQpSolution solve_tree_qp(const std::vector<CliqueSubproblem>& subs,
                             CliqueTree tree, const TreeQpOptions& options) {
  const int n = tree.size();
  if (static_cast<int>(subs.size()) != n)
    throw std::invalid_argument("tree and subproblem counts differ");
  for (const auto& s : subs) s.check();
  bool have_separators = static_cast<int>(tree.separators.size()) == n;
  if (have_separators) {
    have_separators = false;
    for (int a = 0; a < n; ++a)
      if (!tree.separators[a].empty()) have_separators = true;
  }
  if (!have_separators) attach_separators(tree, subs);

  TreeQpSolution sol;
  sol.waves = upward_waves(tree);
  sol.cliques.resize(n);
  for (int k = 0; k < static_cast<int>(sol.waves.size()); ++k)
    for (int a : sol.waves[k]) sol.cliques[a].wave = k;

  std::vector<CliqueElimination> elim(n);
  auto child_messages = [&](int a) {
    std::vector<const QuadMessage*> msgs;
    for (int c : tree.children[a]) msgs.push_back(&elim[c].message);
    return msgs;
  };

  // Upward pass: a clique is ready once all of its children have reported.
  std::vector<int> pending(n);
  std::vector<std::vector<int>> up_next(n);
  for (int a = 0; a < n; ++a) {
    pending[a] = static_cast<int>(tree.children[a].size());
    if (tree.parent[a] >= 0) up_next[a].push_back(tree.parent[a]);
  }
  const auto t_up = Clock::now();
  detail::run_dag(
      pending, up_next,
      [&](int a) {
        const auto t0 = Clock::now();
        const std::vector<int> none;
        elim[a] = eliminate(subs[a], child_messages(a),
                            a == tree.root ? none : tree.separators[a]);
        auto& rep = sol.cliques[a];
        rep.clique = a;
        rep.kkt_size = elim[a].kkt_size;
        rep.n_eliminated = static_cast<int>(elim[a].eliminated.size());
        rep.n_separator = static_cast<int>(elim[a].separator.size());
        rep.n_constraints = subs[a].n_constraints();
        rep.regularized = elim[a].regularized;
        rep.upward_seconds = seconds_since(t0);
      },
      options.threads);
  sol.upward_seconds = seconds_since(t_up);
  sol.objective = elim[tree.root].message.constant;

  // Downward pass.
  std::vector<LocalSolution> local(n);
  std::vector<double> kkt_residual(n, 0.0), mismatch(n, 0.0);
  for (int a = 0; a < n; ++a) pending[a] = tree.parent[a] >= 0 ? 1 : 0;
  const auto t_down = Clock::now();
  detail::run_dag(
      pending, tree.children,
      [&](int a) {
        const auto t0 = Clock::now();
        const int p = tree.parent[a];
        if (p < 0) {
          local[a] = recover(subs[a], elim[a], VectorXd());
        } else {
          const VectorXd s = local[p].z(coordinates_of(subs[p], tree.separators[a]));
          if (options.downward == DownwardMode::FixSeparator)
            local[a] = recover(subs[a], elim[a], s);
          else
            local[a] = downward_solve(subs[a], child_messages(a), tree.separators[a], s,
                                      DownwardMode::Proximal, options.proximal_weight);
          mismatch[a] = (local[a].z(elim[a].separator) - s).cwiseAbs().maxCoeff();
        }
        // Stationarity on eliminated coordinates and local feasibility.
        const auto& sub = subs[a];
        const LocalCost cost = merged_cost(sub, child_messages(a));
        VectorXd grad = cost.H * local[a].z + cost.h;
        if (sub.n_constraints() > 0) grad.noalias() += sub.A.transpose() * local[a].lambda;
        double r = elim[a].eliminated.empty() ? 0.0 : grad(elim[a].eliminated).cwiseAbs().maxCoeff();
        if (sub.n_constraints() > 0)
          r = std::max(r, (sub.A * local[a].z + sub.b).cwiseAbs().maxCoeff());
        kkt_residual[a] = r;
        sol.cliques[a].downward_seconds = seconds_since(t0);
      },
      options.threads);
  sol.downward_seconds = seconds_since(t_down);

  sol.clique_values.resize(n);
  sol.multipliers.resize(n);
  sol.clique_objective.resize(n);
  for (int a = 0; a < n; ++a) {
    sol.clique_objective[a] = subs[a].objective(local[a].z);
    sol.max_kkt_residual = std::max(sol.max_kkt_residual, kkt_residual[a]);
    sol.max_separator_mismatch = std::max(sol.max_separator_mismatch, mismatch[a]);
    // Each group is owned by the clique that eliminates it.
    const auto& sep = a == tree.root ? std::vector<int>{} : tree.separators[a];
    for (const auto& g : subs[a].groups)
      if (std::find(sep.begin(), sep.end(), g.id) == sep.end()) {
        const int off = subs[a].offset_of(g.id);
        sol.values[g.id] = local[a].z.segment(off, g.dim);
      }
    sol.clique_values[a] = std::move(local[a].z);
    sol.multipliers[a] = std::move(local[a].lambda);
  }
  return sol;
}

std::string diagnostics_json(const TreeQpSolution& sol, int root) {
  nlohmann::json j;
  j["root"] = root;
  j["n_cliques"] = sol.cliques.size();
  j["max_factorization_size"] = sol.max_factorization_size();
  j["max_non_root_factorization_size"] = sol.max_non_root_factorization_size(root);
  j["root_factorization_size"] = sol.cliques.empty() ? 0 : sol.root_factorization_size(root);
  j["upward_seconds"] = sol.upward_seconds;
  j["downward_seconds"] = sol.downward_seconds;
  j["max_kkt_residual"] = sol.max_kkt_residual;
  j["max_separator_mismatch"] = sol.max_separator_mismatch;
  j["waves"] = sol.waves;
  auto& cl = j["cliques"] = nlohmann::json::array();
  for (const auto& c : sol.cliques)
    cl.push_back({{"clique", c.clique},
                  {"wave", c.wave},
                  {"kkt_size", c.kkt_size},
                  {"eliminated", c.n_eliminated},
                  {"separator", c.n_separator},
                  {"constraints", c.n_constraints},
                  {"regularized", c.regularized},
                  {"upward_seconds", c.upward_seconds},
                  {"downward_seconds", c.downward_seconds}});
  return j.dump(2);
}

}  // namespace mocap::qp
