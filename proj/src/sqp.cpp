#include "mocap/sqp.hpp"

#include <chrono>
#include <cmath>

namespace mocap {
namespace {

double max_abs(const std::vector<Vec3>& v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, x.lpNorm<Eigen::Infinity>());
  return m;
}

struct MeritPoint {
  double cost;
  double l1;
  double merit(double rho) const { return cost + rho * l1; }
};

MeritPoint evaluate(const Trajectory& x, const MotionData& data) {
  const Linearization lin = linearize(x, data);
  return {total_cost(lin), l1_constraint_violation(lin)};
}

// Same QP with every joint row shifted by the gap c(x + p) left at the trial
// point. Since the QP step satisfies c(x) + J_c p = 0, the corrected rows read
// J_c d + c(x + p) − J_c p = 0.
AssembledQp second_order_correction(const AssembledQp& qp, const Linearization& trial) {
  AssembledQp out = qp;
  const int nj = qp.n_joints;
  for (auto& s : out.subs) {
    std::vector<int> seen(static_cast<std::size_t>(qp.n_steps) * nj, 0);
    for (std::size_t r = 0; r < s.row_tags.size(); ++r) {
      const qp::RowTag& tag = s.row_tags[r];
      if (tag.kind != qp::RowKind::Joint) continue;
      const int k = tag.time * nj + tag.index;
      s.b(static_cast<int>(r)) += trial.joints[k].value(seen[k]++);
    }
  }
  return out;
}

}  // namespace

const char* to_string(InnerSolver s) { return s == InnerSolver::Dense ? "dense" : "mp"; }

InnerSolver parse_inner_solver(const std::string& s) {
  if (s == "mp") return InnerSolver::MessagePassing;
  if (s == "dense") return InnerSolver::Dense;
  throw std::invalid_argument("solver must be 'mp' or 'dense', got '" + s + "'");
}

const char* to_string(SqpStatus s) {
  switch (s) {
    case SqpStatus::Converged: return "converged";
    case SqpStatus::MaxIterations: return "max_iterations";
    case SqpStatus::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

QpStep solve_qp_step(const AssembledQp& qp, const SqpSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  QpStep step;
  if (settings.solver == InnerSolver::MessagePassing) {
    qp::TreeQpSolution sol;
    try {
      sol = qp::solve_tree_qp(qp.subs, qp.tree, settings.tree);
    } catch (const qp::SingularCliqueError& e) {
      throw QpSolveError(e.what());
    }
    step = collect_step(qp, sol.values, sol.multipliers);
    step.max_factorization_size = sol.max_factorization_size();
    step.root_factorization_size = sol.root_factorization_size(qp.tree.root);
  } else {
    qp::DenseQp dense;
    qp::DenseSolution sol;
    try {
      dense = qp::assemble_dense(qp.subs, settings.dense_cap);
      sol = qp::solve_dense(dense);
    } catch (const qp::DenseSizeError& e) {
      throw QpSolveError(e.what());
    } catch (const qp::SingularKktError& e) {
      throw QpSolveError(e.what());
    }
    std::map<int, VectorXd> values;
    for (const auto& [id, g] : dense.groups) values[id] = sol.z.segment(dense.offset.at(id), g.dim);
    std::vector<VectorXd> lambda(qp.subs.size());
    for (std::size_t a = 0; a < qp.subs.size(); ++a)
      lambda[a] = VectorXd::Zero(qp.subs[a].n_constraints());
    for (int r = 0; r < dense.m(); ++r) {
      const auto [a, local] = dense.row_origin[r];
      lambda[a](local) = sol.lambda(r);
    }
    step = collect_step(qp, values, lambda);
    step.max_factorization_size = step.root_factorization_size = dense.n() + dense.m();
  }
  step.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return step;
}

Trajectory initialize_trajectory(const MotionData& data) {
  validate(data);
  const ChainConfig& cfg = data.config;
  const int ns = cfg.n_segments(), nt = data.n_steps(), d = cfg.designated_sensor;
  Trajectory x;
  x.params.assign(ns, SensorParams{});
  x.slices.resize(nt);
  for (int t = 0; t < nt; ++t) {
    auto& s = x.slices[t];
    s.sensors.resize(ns);
    s.segments.resize(ns);
    for (int i = 0; i < ns; ++i) {
      const Quat q = t == 0 ? data.prior_mean[i].orientation.normalized()
                            : so3::plus(x.slices[t - 1].sensors[i].orientation,
                                        cfg.dt * data.samples[t][i].gyro);
      s.sensors[i].orientation = q;
      s.segments[i].orientation = (q * cfg.segments[i].mounting.conjugate()).normalized();
    }
    // Chain placement outward from the designated segment.
    s.segments[d].position.setZero();
    for (int j = d - 1; j >= 0; --j)
      s.segments[j].position = s.segments[j + 1].position +
                               s.segments[j + 1].orientation * cfg.joint_offset_in_upper(j) -
                               s.segments[j].orientation * cfg.joint_offset_in_lower(j);
    for (int j = d; j + 1 < ns; ++j)
      s.segments[j + 1].position = s.segments[j].position +
                                   s.segments[j].orientation * cfg.joint_offset_in_lower(j) -
                                   s.segments[j + 1].orientation * cfg.joint_offset_in_upper(j);
    for (int i = 0; i < ns; ++i)
      s.sensors[i].position =
          s.segments[i].position + s.segments[i].orientation * cfg.segments[i].lever_arm;
  }
  for (int t = 0; t < nt; ++t) {
    auto& sd = x.slices[t].sensors[d];
    if (t + 1 < nt)
      sd.mean_accel = sd.orientation * data.samples[t + 1][d].accel + cfg.gravity;
    else if (t > 0)
      sd.mean_accel = *x.slices[t - 1].sensors[d].mean_accel;
    else
      sd.mean_accel = data.prior_mean[d].mean_accel.value_or(Vec3::Zero());
  }
  return x;
}

SmootherEstimate sqp_solve(const MotionData& data, const SqpSettings& settings,
                           std::optional<Trajectory> initial,
                           const std::function<void(const IterationLog&)>& on_iteration) {
  if (!(settings.kkt_tolerance > 0.0) || !(settings.constraint_tolerance > 0.0))
    throw std::invalid_argument("tolerances must be positive");
  SmootherEstimate est;
  est.ordering = settings.ordering;
  est.solver = settings.solver;
  est.x = initial ? std::move(*initial) : initialize_trajectory(data);
  const int designated = data.config.designated_sensor;
  double rho = 0.0;

  for (int k = 0; k < settings.max_iterations; ++k) {
    const Linearization lin = linearize(est.x, data);
    const TrajectoryLayout layout = layout_of(est.x, designated);
    const AssembledQp qp = assemble(settings.ordering, est.x, data);
    const QpStep step = solve_qp_step(qp, settings);

    const VectorXd grad = cost_gradient(lin, layout);
    IterationLog entry;
    entry.iteration = k;
    entry.cost = total_cost(lin);
    entry.constraint_violation = max_constraint_violation(lin);
    entry.kkt_residual =
        (grad + constraint_transpose_product(lin, step.joint_multipliers, layout))
            .lpNorm<Eigen::Infinity>();
    entry.consensus_deviation = step.consensus_deviation;
    entry.qp_seconds = step.seconds;
    entry.max_factorization_size = step.max_factorization_size;
    est.joint_multipliers = step.joint_multipliers;
    est.kkt_residual = entry.kkt_residual;

    if (entry.kkt_residual <= settings.kkt_tolerance &&
        entry.constraint_violation <= settings.constraint_tolerance) {
      entry.penalty = rho;
      entry.merit = entry.cost + rho * l1_constraint_violation(lin);
      est.log.push_back(entry);
      if (on_iteration) on_iteration(entry);
      est.status = SqpStatus::Converged;
      break;
    }

    rho = std::max(rho, settings.penalty_factor * max_abs(step.joint_multipliers));
    const MeritPoint here{entry.cost, l1_constraint_violation(lin)};
    const double merit0 = here.merit(rho);
    const double slope = grad.dot(step.step) - rho * here.l1;

    double alpha = 1.0;
    bool accepted = false;
    Trajectory trial;
    VectorXd taken = step.step;
    int halvings = 0;
    for (; halvings <= settings.max_halvings; ++halvings, alpha *= settings.backtrack) {
      trial = retract(est.x, alpha * step.step, designated);
      const Linearization at_trial = linearize(trial, data);
      const double merit = total_cost(at_trial) + rho * l1_constraint_violation(at_trial);
      if (merit < merit0 && merit <= merit0 + settings.armijo * alpha * slope) {
        accepted = true;
        break;
      }
      if (halvings == 0 && settings.second_order_correction) {
        const QpStep soc = solve_qp_step(second_order_correction(qp, at_trial), settings);
        entry.qp_seconds += soc.seconds;
        Trajectory corrected = retract(est.x, soc.step, designated);
        const double m = evaluate(corrected, data).merit(rho);
        if (m < merit0 && m <= merit0 + settings.armijo * slope) {
          trial = std::move(corrected);
          taken = soc.step;
          entry.corrected = true;
          accepted = true;
          break;
        }
      }
    }
    entry.penalty = rho;
    entry.merit = merit0;
    entry.halvings = halvings;
    if (!accepted) {
      est.log.push_back(entry);
      if (on_iteration) on_iteration(entry);
      est.status = SqpStatus::LineSearchFailed;
      break;
    }
    entry.step_length = alpha;
    entry.step_norm = alpha * taken.lpNorm<Eigen::Infinity>();
    est.log.push_back(entry);
    if (on_iteration) on_iteration(entry);
    est.x = std::move(trial);
    est.status = SqpStatus::MaxIterations;
  }

  const Linearization fin = linearize(est.x, data);
  est.cost = total_cost(fin);
  est.constraint_violation = max_constraint_violation(fin);
  est.iterations = static_cast<int>(est.log.size());
  return est;
}

}  // namespace mocap
