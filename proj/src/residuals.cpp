#include "mocap/residuals.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mocap {

using so3::Mat3;

namespace {

constexpr double kUnitTolerance = 1e-9;

void require_unit(const Quat& q, const char* what) {
  if (!so3::is_unit(q, kUnitTolerance))
    throw std::invalid_argument(std::string(what) +
                                ": quaternion is not unit norm");
}

void require_index(int i, int n, const char* what) {
  if (i < 0 || i >= n)
    throw std::out_of_range(std::string(what) + " index " + std::to_string(i) +
                            " out of range [0, " + std::to_string(n) + ")");
}

}  // namespace

Residual dynamics_residual(const SensorState& prev, const SensorState& curr,
                           const SensorParams& params, const ImuSample& sample,
                           const ChainConfig& cfg, int sensor, int t) {
  require_index(sensor, cfg.n_segments(), "sensor");
  const bool designated = sensor == cfg.designated_sensor;
  if (prev.mean_accel.has_value() != designated ||
      curr.mean_accel.has_value() != designated)
    throw std::invalid_argument(
        "dynamics_residual: states do not belong to sensor " +
        std::to_string(sensor));
  require_unit(prev.orientation, "dynamics_residual(prev)");
  require_unit(curr.orientation, "dynamics_residual(curr)");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("dynamics_residual: dt <= 0");

  const double dt = cfg.dt;
  const int rows = designated ? 12 : 9;
  const int cols = prev.tangent_dim();

  const Mat3 r_prev = prev.orientation.toRotationMatrix();
  const Vec3 accel_world = r_prev * sample.accel + cfg.gravity;
  const Vec3 phi = dt * (sample.gyro - params.gyro_bias);
  const Quat delta_q = so3::exp(phi);
  const Quat err = curr.orientation.conjugate() * prev.orientation * delta_q;
  const Vec3 r_q = so3::log(err);
  const Mat3 jr_inv = so3::right_jacobian_inverse(r_q);
  const Mat3 f_skew = r_prev * so3::skew(sample.accel);

  Residual res;
  res.value.resize(rows);
  res.value.segment<3>(0) =
      curr.position - (prev.position + dt * prev.velocity +
                       0.5 * dt * dt * accel_world);
  res.value.segment<3>(3) = curr.velocity - (prev.velocity + dt * accel_world);
  res.value.segment<3>(6) = r_q;

  res.sqrt_info.resize(rows);
  res.sqrt_info.segment<3>(0).setConstant(1.0 / (0.5 * dt * dt * cfg.noise.accel));
  res.sqrt_info.segment<3>(3).setConstant(1.0 / (dt * cfg.noise.accel));
  res.sqrt_info.segment<3>(6).setConstant(1.0 / (dt * cfg.noise.gyro));

  MatrixXd j_prev = MatrixXd::Zero(rows, cols);
  j_prev.block<3, 3>(0, 0) = -Mat3::Identity();
  j_prev.block<3, 3>(0, 3) = -dt * Mat3::Identity();
  j_prev.block<3, 3>(0, 6) = 0.5 * dt * dt * f_skew;
  j_prev.block<3, 3>(3, 3) = -Mat3::Identity();
  j_prev.block<3, 3>(3, 6) = dt * f_skew;
  j_prev.block<3, 3>(6, 6) =
      jr_inv * delta_q.toRotationMatrix().transpose();

  MatrixXd j_curr = MatrixXd::Zero(rows, cols);
  j_curr.block<3, 3>(0, 0) = Mat3::Identity();
  j_curr.block<3, 3>(3, 3) = Mat3::Identity();
  j_curr.block<3, 3>(6, 6) = -jr_inv * err.toRotationMatrix().transpose();

  MatrixXd j_bias = MatrixXd::Zero(rows, 3);
  j_bias.block<3, 3>(6, 0) = -dt * jr_inv * so3::right_jacobian(phi);

  if (designated) {
    res.value.segment<3>(9) = *prev.mean_accel - accel_world;
    res.sqrt_info.segment<3>(9).setConstant(1.0 / cfg.noise.accel);
    j_prev.block<3, 3>(9, 9) = Mat3::Identity();
    j_prev.block<3, 3>(9, 6) = f_skew;
  }

  res.blocks.push_back({{VarKind::Sensor, sensor, t - 1}, std::move(j_prev)});
  res.blocks.push_back({{VarKind::Sensor, sensor, t}, std::move(j_curr)});
  res.blocks.push_back({{VarKind::Bias, sensor, t}, std::move(j_bias)});
  return res;
}

Residual placement_residual(const SensorState& sensor,
                            const SegmentState& segment,
                            const ChainConfig& cfg, int i, int t) {
  require_index(i, cfg.n_segments(), "segment");
  const auto& spec = cfg.segments[i];
  const Mat3 r_seg = segment.orientation.toRotationMatrix();
  const Quat err =
      sensor.orientation.conjugate() * segment.orientation * spec.mounting;
  const Vec3 r_q = so3::log(err);
  const Mat3 jr_inv = so3::right_jacobian_inverse(r_q);

  Residual res;
  res.value.resize(6);
  res.value.head<3>() =
      sensor.position - (segment.position + r_seg * spec.lever_arm);
  res.value.tail<3>() = r_q;
  res.sqrt_info.resize(6);
  res.sqrt_info.head<3>().setConstant(1.0 / cfg.noise.placement_position);
  res.sqrt_info.tail<3>().setConstant(1.0 / cfg.noise.placement_orientation);

  MatrixXd j_sensor = MatrixXd::Zero(6, sensor.tangent_dim());
  j_sensor.block<3, 3>(0, 0) = Mat3::Identity();
  j_sensor.block<3, 3>(3, 6) = -jr_inv * err.toRotationMatrix().transpose();

  MatrixXd j_segment = MatrixXd::Zero(6, 6);
  j_segment.block<3, 3>(0, 0) = -Mat3::Identity();
  j_segment.block<3, 3>(0, 3) = r_seg * so3::skew(spec.lever_arm);
  j_segment.block<3, 3>(3, 3) =
      jr_inv * spec.mounting.toRotationMatrix().transpose();

  res.blocks.push_back({{VarKind::Sensor, i, t}, std::move(j_sensor)});
  res.blocks.push_back({{VarKind::Segment, i, t}, std::move(j_segment)});
  return res;
}

Residual joint_constraint(const SegmentState& lower, const SegmentState& upper,
                          const ChainConfig& cfg, int joint, int t) {
  require_index(joint, cfg.n_joints(), "joint");
  const Vec3& d_lower = cfg.joint_offset_in_lower(joint);
  const Vec3& d_upper = cfg.joint_offset_in_upper(joint);
  const Mat3 r_lower = lower.orientation.toRotationMatrix();
  const Mat3 r_upper = upper.orientation.toRotationMatrix();

  Residual res;
  res.value = (lower.position + r_lower * d_lower) -
              (upper.position + r_upper * d_upper);
  res.sqrt_info = VectorXd::Ones(3);

  MatrixXd j_lower(3, 6), j_upper(3, 6);
  j_lower << Mat3::Identity(), -r_lower * so3::skew(d_lower);
  j_upper << -Mat3::Identity(), r_upper * so3::skew(d_upper);
  res.blocks.push_back({{VarKind::Segment, joint, t}, std::move(j_lower)});
  res.blocks.push_back({{VarKind::Segment, joint + 1, t}, std::move(j_upper)});
  return res;
}

Residual initial_state_prior(const SensorState& first,
                             const SensorState& prior_mean,
                             const ChainConfig& cfg, int i) {
  const int rows = first.tangent_dim();
  if (prior_mean.tangent_dim() != rows)
    throw std::invalid_argument("initial_state_prior: layout mismatch");
  const auto& noise = cfg.noise;
  const Vec3 r_q =
      so3::log(prior_mean.orientation.conjugate() * first.orientation);

  Residual res;
  res.value.resize(rows);
  res.value.segment<3>(0) = first.position - prior_mean.position;
  res.value.segment<3>(3) = first.velocity - prior_mean.velocity;
  res.value.segment<3>(6) = r_q;
  res.sqrt_info.resize(rows);
  res.sqrt_info.segment<3>(0).setConstant(1.0 / noise.initial_position);
  res.sqrt_info.segment<3>(3).setConstant(1.0 / noise.initial_velocity);
  res.sqrt_info.segment<3>(6).setConstant(1.0 / noise.initial_orientation);

  MatrixXd jac = MatrixXd::Identity(rows, rows);
  jac.block<3, 3>(6, 6) = so3::right_jacobian_inverse(r_q);
  if (first.mean_accel) {
    res.value.segment<3>(9) = *first.mean_accel - *prior_mean.mean_accel;
    res.sqrt_info.segment<3>(9).setConstant(1.0 / noise.initial_mean_accel);
  }
  res.blocks.push_back({{VarKind::Sensor, i, 0}, std::move(jac)});
  return res;
}

Residual bias_prior(const SensorParams& params, const ChainConfig& cfg, int i,
                    int copy, int bias_copies) {
  Residual res;
  res.value = params.gyro_bias;
  res.sqrt_info = VectorXd::Constant(
      3, 1.0 / (cfg.noise.bias_prior * std::sqrt(double(bias_copies))));
  res.blocks.push_back(
      {{VarKind::Bias, i, copy}, MatrixXd::Identity(3, 3)});
  return res;
}

std::vector<Residual> prior_residuals(const std::vector<SensorState>& first,
                                      const std::vector<SensorParams>& params,
                                      const std::vector<SensorState>& prior_mean,
                                      const ChainConfig& cfg,
                                      int bias_copies) {
  if (bias_copies < 1) throw std::invalid_argument("bias_copies must be >= 1");
  std::vector<Residual> out;
  for (std::size_t i = 0; i < first.size(); ++i)
    out.push_back(initial_state_prior(first[i], prior_mean[i], cfg, int(i)));
  for (std::size_t i = 0; i < params.size(); ++i)
    for (int c = 0; c < bias_copies; ++c)
      out.push_back(bias_prior(params[i], cfg, int(i), c, bias_copies));
  return out;
}

}  // namespace mocap
