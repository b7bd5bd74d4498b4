#include "mocap/assembly.hpp"

#include <functional>
#include <stdexcept>
#include <string>

namespace mocap {
namespace {

using ColumnOf = std::function<int(const VarKey&)>;

// Constraint blocks collected per clique, stacked once at the end.
struct ConstraintRows {
  std::vector<std::pair<Residual, qp::RowTag>> blocks;
  int rows = 0;
};

qp::CliqueSubproblem empty_clique(int id, std::vector<qp::VariableGroup> groups) {
  qp::CliqueSubproblem sub;
  sub.id = id;
  sub.groups = std::move(groups);
  const int n = sub.dim();
  sub.H = MatrixXd::Zero(n, n);
  sub.h = VectorXd::Zero(n);
  return sub;
}

// Adds ½‖r̃ + J̃ p‖² to the clique.
void add_cost(qp::CliqueSubproblem& sub, const Residual& r, const ColumnOf& col) {
  const VectorXd rw = r.whitened();
  std::vector<MatrixXd> jw;
  std::vector<int> off;
  for (std::size_t k = 0; k < r.blocks.size(); ++k) {
    jw.push_back(r.whitened_jacobian(k));
    off.push_back(col(r.blocks[k].key));
  }
  // Blocks are written in mirrored pairs so that H stays exactly symmetric.
  for (std::size_t p = 0; p < jw.size(); ++p) {
    const auto np = jw[p].cols();
    sub.h.segment(off[p], np).noalias() += jw[p].transpose() * rw;
    MatrixXd diag = jw[p].transpose() * jw[p];
    sub.H.block(off[p], off[p], np, np) += 0.5 * (diag + diag.transpose());
    for (std::size_t q = p + 1; q < jw.size(); ++q) {
      const MatrixXd pq = jw[p].transpose() * jw[q];
      sub.H.block(off[p], off[q], np, pq.cols()) += pq;
      sub.H.block(off[q], off[p], pq.cols(), np) += pq.transpose();
    }
  }
  sub.constant += 0.5 * rw.squaredNorm();
}

// Queues c + J_c p = 0.
void add_constraint(ConstraintRows& rows, Residual c, qp::RowTag tag) {
  rows.rows += c.rows();
  rows.blocks.emplace_back(std::move(c), tag);
}

void finish(qp::CliqueSubproblem& sub, const ConstraintRows& rows, const ColumnOf& col) {
  sub.A = MatrixXd::Zero(rows.rows, sub.dim());
  sub.b = VectorXd::Zero(rows.rows);
  int r0 = 0;
  for (const auto& [c, tag] : rows.blocks) {
    const int m = c.rows();
    sub.b.segment(r0, m) = c.value;
    for (const auto& blk : c.blocks)
      sub.A.block(r0, col(blk.key), m, blk.jacobian.cols()) += blk.jacobian;
    for (int k = 0; k < m; ++k) sub.row_tags.push_back(tag);
    r0 += m;
  }
}

[[noreturn]] void bad_key(int clique, const VarKey& key) {
  throw std::logic_error("variable (" + std::to_string(static_cast<int>(key.kind)) + ", " +
                         std::to_string(key.index) + ", " + std::to_string(key.time) +
                         ") is not in clique " + std::to_string(clique));
}

AssembledQp skeleton(Ordering ordering, const Trajectory& x, const MotionData& data) {
  validate(data);
  AssembledQp qp;
  qp.ordering = ordering;
  qp.n_steps = x.n_steps();
  qp.n_sensors = data.n_sensors();
  qp.n_joints = data.config.n_joints();
  qp.layout = layout_of(x, data.config.designated_sensor);
  if (x.n_steps() != data.n_steps() || x.n_sensors() != data.n_sensors())
    throw std::invalid_argument("iterate does not match the data dimensions");
  return qp;
}

}  // namespace

const char* to_string(Ordering o) {
  return o == Ordering::TimeOrdered ? "time" : "sensor";
}

Ordering parse_ordering(const std::string& s) {
  if (s == "time") return Ordering::TimeOrdered;
  if (s == "sensor") return Ordering::SensorOrdered;
  throw std::invalid_argument("ordering must be 'time' or 'sensor', got '" + s + "'");
}

AssembledQp assemble_time_ordered(const Trajectory& x, const MotionData& data) {
  AssembledQp qp = skeleton(Ordering::TimeOrdered, x, data);
  const int nt = qp.n_steps, ns = qp.n_sensors, nj = qp.n_joints;
  if (nt < 2) throw std::invalid_argument("time ordering needs at least two steps");
  const int n_cliques = nt - 1;
  const int root = qp::middle_root(nt);
  const SliceLayout& slice = qp.layout.slice;
  const int D = slice.dim(), P = 3 * ns;

  const Linearization lin = linearize(x, data, nt);

  // Cost term -> clique.
  std::vector<std::vector<const Residual*>> costs(n_cliques);
  for (const auto& c : lin.costs) {
    int a = 0;
    switch (c.tag.kind) {
      case CostKind::InitialPrior: a = 0; break;
      case CostKind::BiasPrior:
      case CostKind::Placement: a = std::min(c.tag.time, n_cliques - 1); break;
      case CostKind::Dynamics: a = c.tag.time - 1; break;
    }
    costs[a].push_back(&c.residual);
  }

  qp.subs.reserve(n_cliques);
  for (int a = 0; a < n_cliques; ++a) {
    auto sub = empty_clique(a, {{qp.state_group(a), D, qp::GroupKind::State},
                                {qp.theta_group(a), P, qp::GroupKind::Parameter},
                                {qp.state_group(a + 1), D, qp::GroupKind::State},
                                {qp.theta_group(a + 1), P, qp::GroupKind::Parameter}});
    const ColumnOf col = [&, a](const VarKey& k) {
      const int t = k.time;
      if (t != a && t != a + 1) bad_key(a, k);
      const int base = t == a ? 0 : D + P;
      switch (k.kind) {
        case VarKind::Sensor: return base + slice.sensor_offset(k.index);
        case VarKind::Segment: return base + slice.segment_offset(k.index);
        case VarKind::Bias: return base + D + 3 * k.index;
      }
      bad_key(a, k);
    };
    for (const Residual* r : costs[a]) add_cost(sub, *r, col);

    ConstraintRows rows;
    auto add_joints = [&](int t) {
      for (int j = 0; j < nj; ++j) add_constraint(rows, lin.joint(t, j), {qp::RowKind::Joint, t, j});
    };
    if (a <= root) add_joints(a);
    // Consensus θ̄_a − θ̄_{a+1} = 0; the iterate keeps one θ, so b = 0.
    for (int i = 0; i < ns; ++i) {
      Residual cons;
      cons.value = VectorXd::Zero(3);
      cons.blocks.push_back({{VarKind::Bias, i, a}, MatrixXd::Identity(3, 3)});
      cons.blocks.push_back({{VarKind::Bias, i, a + 1}, -MatrixXd::Identity(3, 3)});
      add_constraint(rows, std::move(cons), {qp::RowKind::Consensus, a, i});
    }
    if (a >= root) add_joints(a + 1);
    finish(sub, rows, col);
    qp.subs.push_back(std::move(sub));
  }

  qp.tree = qp::build_chain_tree(n_cliques, root);
  qp::attach_separators(qp.tree, qp.subs);
  return qp;
}

AssembledQp assemble_sensor_ordered(const Trajectory& x, const MotionData& data) {
  AssembledQp qp = skeleton(Ordering::SensorOrdered, x, data);
  const int nt = qp.n_steps, ns = qp.n_sensors;
  if (ns < 2) throw std::invalid_argument("sensor ordering needs at least two sensors");
  const int n_cliques = ns - 1;
  const int root = qp::middle_root(ns);
  const SliceLayout& slice = qp.layout.slice;
  auto per_step = [&](int i) { return slice.sensor_dim(i) + SegmentState::kTangentDim; };

  const Linearization lin = linearize(x, data, 1);
  std::vector<std::vector<const Residual*>> costs(n_cliques);
  for (const auto& c : lin.costs)
    costs[std::min(c.tag.sensor, n_cliques - 1)].push_back(&c.residual);

  qp.subs.reserve(n_cliques);
  for (int a = 0; a < n_cliques; ++a) {
    const int Da = nt * per_step(a), Db = nt * per_step(a + 1);
    auto sub = empty_clique(a, {{qp.state_group(a), Da, qp::GroupKind::State},
                                {qp.theta_group(a), 3, qp::GroupKind::Parameter},
                                {qp.state_group(a + 1), Db, qp::GroupKind::State},
                                {qp.theta_group(a + 1), 3, qp::GroupKind::Parameter}});
    const ColumnOf col = [&, a, Da](const VarKey& k) {
      const int i = k.index;
      if (i != a && i != a + 1) bad_key(a, k);
      const int base = i == a ? 0 : Da + 3;
      switch (k.kind) {
        case VarKind::Sensor: return base + k.time * per_step(i);
        case VarKind::Segment: return base + k.time * per_step(i) + slice.sensor_dim(i);
        case VarKind::Bias: return base + nt * per_step(i);
      }
      bad_key(a, k);
    };
    for (const Residual* r : costs[a]) add_cost(sub, *r, col);
    ConstraintRows rows;
    for (int t = 0; t < nt; ++t) add_constraint(rows, lin.joint(t, a), {qp::RowKind::Joint, t, a});
    finish(sub, rows, col);
    qp.subs.push_back(std::move(sub));
  }

  qp.tree = qp::build_chain_tree(n_cliques, root);
  qp::attach_separators(qp.tree, qp.subs);
  return qp;
}

AssembledQp assemble(Ordering ordering, const Trajectory& x, const MotionData& data) {
  return ordering == Ordering::TimeOrdered ? assemble_time_ordered(x, data)
                                           : assemble_sensor_ordered(x, data);
}

ProblemSize problem_size(const AssembledQp& qp) {
  ProblemSize s;
  s.dims = state_dimensions(qp.n_sensors, qp.n_steps);
  s.n_cliques = qp.tree.size();
  s.root = qp.tree.root;
  for (int a = 0; a < s.n_cliques; ++a) {
    const auto& sub = qp.subs[a];
    int sep = 0;
    if (a != qp.tree.root)
      for (int id : qp.tree.separators[a]) sep += sub.find(id)->dim;
    const int size = sub.dim() - sep + sub.n_constraints();
    s.kkt_sizes.push_back(size);
    if (a == qp.tree.root)
      s.root_kkt_size = size;
    else
      s.max_non_root_kkt_size = std::max(s.max_non_root_kkt_size, size);
  }
  s.dense = qp::dense_sizes(qp.subs);
  return s;
}

QpStep collect_step(const AssembledQp& qp, const std::map<int, VectorXd>& values,
                    const std::vector<VectorXd>& clique_multipliers) {
  const auto& L = qp.layout;
  const int nt = qp.n_steps, ns = qp.n_sensors, nj = qp.n_joints;
  QpStep out;
  out.step = VectorXd::Zero(L.dim());
  if (qp.ordering == Ordering::TimeOrdered) {
    VectorXd theta = VectorXd::Zero(3 * ns);
    for (int t = 0; t < nt; ++t) {
      out.step.segment(L.slice_offset(t), L.slice.dim()) = values.at(qp.state_group(t));
      out.theta_copies.push_back(values.at(qp.theta_group(t)));
      theta += out.theta_copies.back();
    }
    out.step.tail(3 * ns) = theta / nt;
    out.consensus_deviation = consensus_check(out.theta_copies);
  } else {
    for (int i = 0; i < ns; ++i) {
      const VectorXd& xi = values.at(qp.state_group(i));
      const int ds = L.slice.sensor_dim(i), step = ds + SegmentState::kTangentDim;
      for (int t = 0; t < nt; ++t) {
        out.step.segment(L.slice_offset(t) + L.slice.sensor_offset(i), ds) = xi.segment(t * step, ds);
        out.step.segment(L.slice_offset(t) + L.slice.segment_offset(i), SegmentState::kTangentDim) =
            xi.segment(t * step + ds, SegmentState::kTangentDim);
      }
      out.step.segment(L.theta_offset() + 3 * i, 3) = values.at(qp.theta_group(i));
    }
  }

  out.joint_multipliers.assign(static_cast<std::size_t>(nt) * nj, Vec3::Zero());
  std::vector<int> filled(out.joint_multipliers.size(), 0);
  for (std::size_t a = 0; a < qp.subs.size(); ++a) {
    const auto& tags = qp.subs[a].row_tags;
    for (std::size_t r = 0; r < tags.size(); ++r) {
      if (tags[r].kind != qp::RowKind::Joint) continue;
      const std::size_t k = static_cast<std::size_t>(tags[r].time) * nj + tags[r].index;
      out.joint_multipliers[k](filled[k]++) = clique_multipliers[a](r);
    }
  }
  return out;
}

double consensus_check(const std::vector<VectorXd>& theta_copies) {
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < theta_copies.size(); ++t)
    worst = std::max(worst, (theta_copies[t] - theta_copies[t + 1]).lpNorm<Eigen::Infinity>());
  return worst;
}

}  // namespace mocap
