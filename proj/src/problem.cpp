#include "mocap/problem.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mocap {

void validate(const MotionData& data) {
  validate(data.config);
  const int ns = data.n_sensors();
  if (data.n_steps() < 1) throw std::invalid_argument("data has no samples");
  for (int t = 0; t < data.n_steps(); ++t)
    if (static_cast<int>(data.samples[t].size()) != ns)
      throw std::invalid_argument("step " + std::to_string(t) + " has " +
                                  std::to_string(data.samples[t].size()) +
                                  " samples, expected " + std::to_string(ns));
  if (static_cast<int>(data.prior_mean.size()) != ns)
    throw std::invalid_argument("prior mean must cover every sensor");
}

Linearization linearize(const Trajectory& x, const MotionData& data,
                        int bias_copies) {
  const auto& cfg = data.config;
  const int ns = cfg.n_segments();
  const int nt = x.n_steps();
  if (nt != data.n_steps())
    throw std::invalid_argument("iterate and data lengths differ");

  Linearization lin;
  lin.n_steps = nt;
  lin.n_joints = cfg.n_joints();
  lin.costs.reserve(static_cast<std::size_t>(nt) * ns * 2 + ns * (1 + bias_copies));

  for (int i = 0; i < ns; ++i)
    lin.costs.push_back({{CostKind::InitialPrior, i, 0},
                         initial_state_prior(x.slices[0].sensors[i],
                                             data.prior_mean[i], cfg, i)});
  for (int i = 0; i < ns; ++i)
    for (int c = 0; c < bias_copies; ++c)
      lin.costs.push_back({{CostKind::BiasPrior, i, c},
                           bias_prior(x.params[i], cfg, i, c, bias_copies)});
  for (int t = 0; t < nt; ++t) {
    const auto& slice = x.slices[t];
    for (int i = 0; i < ns; ++i) {
      lin.costs.push_back({{CostKind::Placement, i, t},
                           placement_residual(slice.sensors[i],
                                              slice.segments[i], cfg, i, t)});
      if (t > 0)
        lin.costs.push_back(
            {{CostKind::Dynamics, i, t},
             dynamics_residual(x.slices[t - 1].sensors[i], slice.sensors[i],
                               x.params[i], data.samples[t][i], cfg, i, t)});
    }
  }
  lin.joints.reserve(static_cast<std::size_t>(nt) * lin.n_joints);
  for (int t = 0; t < nt; ++t)
    for (int j = 0; j < lin.n_joints; ++j)
      lin.joints.push_back(joint_constraint(x.slices[t].segments[j],
                                            x.slices[t].segments[j + 1], cfg,
                                            j, t));
  return lin;
}

double total_cost(const Linearization& lin) {
  double sum = 0.0;
  for (const auto& c : lin.costs) sum += c.residual.cost();
  return sum;
}

double total_cost(const Trajectory& x, const MotionData& data) {
  return total_cost(linearize(x, data));
}

double max_constraint_violation(const Linearization& lin) {
  double worst = 0.0;
  for (const auto& c : lin.joints) worst = std::max(worst, c.value.lpNorm<Eigen::Infinity>());
  return worst;
}

double l1_constraint_violation(const Linearization& lin) {
  double sum = 0.0;
  for (const auto& c : lin.joints) sum += c.value.lpNorm<1>();
  return sum;
}

int global_offset(const VarKey& key, const TrajectoryLayout& layout) {
  switch (key.kind) {
    case VarKind::Sensor:
      return layout.slice_offset(key.time) + layout.slice.sensor_offset(key.index);
    case VarKind::Segment:
      return layout.slice_offset(key.time) + layout.slice.segment_offset(key.index);
    case VarKind::Bias:
      return layout.theta_offset() + 3 * key.index;
  }
  return -1;
}

VectorXd cost_gradient(const Linearization& lin, const TrajectoryLayout& layout) {
  VectorXd g = VectorXd::Zero(layout.dim());
  for (const auto& c : lin.costs) {
    const auto& r = c.residual;
    const VectorXd wr = r.sqrt_info.cwiseProduct(r.whitened());
    for (const auto& b : r.blocks)
      g.segment(global_offset(b.key, layout), b.jacobian.cols()) +=
          b.jacobian.transpose() * wr;
  }
  return g;
}

VectorXd constraint_transpose_product(const Linearization& lin,
                                      const std::vector<Vec3>& multipliers,
                                      const TrajectoryLayout& layout) {
  VectorXd out = VectorXd::Zero(layout.dim());
  if (multipliers.size() != lin.joints.size())
    throw std::invalid_argument("one multiplier per joint row block expected");
  for (std::size_t k = 0; k < lin.joints.size(); ++k)
    for (const auto& b : lin.joints[k].blocks)
      out.segment(global_offset(b.key, layout), b.jacobian.cols()) +=
          b.jacobian.transpose() * multipliers[k];
  return out;
}

}  // namespace mocap
