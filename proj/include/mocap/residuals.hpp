#pragma once

// Cost residuals and joint constraints of the motion-capture problem.
//
// Every function is pure. Jacobians are taken with respect to the local
// (tangent) coordinates of each referenced variable:
//   sensor state  [δp, δv, δθ(, δa_mean)]  9 or 12 columns
//   segment state [δp, δθ]                 6 columns
//   gyro bias     [δb]                     3 columns
// with orientations perturbed as q ⊙ exp(δθ).

#include <compare>
#include <vector>

#include "mocap/state.hpp"

namespace mocap {

enum class VarKind { Sensor, Segment, Bias };

/// Identifies one variable block. For biases `time` selects the
/// time-replicated copy; assemblies that keep a single bias ignore it.
struct VarKey {
  VarKind kind;
  int index;
  int time;

  auto operator<=>(const VarKey&) const = default;
};

struct JacobianBlock {
  VarKey key;
  MatrixXd jacobian;  // unwhitened, rows x local dim of `key`
};

/// A (possibly weighted) residual r(x) with its first-order expansion.
/// The cost contribution is ½‖diag(sqrt_info)·r‖².
struct Residual {
  VectorXd value;
  VectorXd sqrt_info;
  std::vector<JacobianBlock> blocks;

  int rows() const { return static_cast<int>(value.size()); }
  VectorXd whitened() const { return sqrt_info.cwiseProduct(value); }
  MatrixXd whitened_jacobian(std::size_t block) const {
    return sqrt_info.asDiagonal() * blocks[block].jacobian;
  }
  double cost() const { return 0.5 * whitened().squaredNorm(); }
};

/// Strapdown transition of sensor `sensor` from step t-1 to `t`, using the
/// sample recorded over that interval and bias copy `t`.
/// Rows: position, velocity, orientation, then mean-acceleration
/// consistency for the designated sensor.
Residual dynamics_residual(const SensorState& prev, const SensorState& curr,
                           const SensorParams& params, const ImuSample& sample,
                           const ChainConfig& cfg, int sensor, int t);

/// Soft sensor-on-segment placement term (position rows, then orientation).
Residual placement_residual(const SensorState& sensor,
                            const SegmentState& segment,
                            const ChainConfig& cfg, int i, int t);

/// Joint `joint` (between segments joint and joint+1) at step t. Unweighted.
Residual joint_constraint(const SegmentState& lower, const SegmentState& upper,
                          const ChainConfig& cfg, int joint, int t);

/// Prior on the first sensor states, plus the bias prior replicated over
/// `bias_copies` time-indexed copies (each with weight 1/bias_copies, so the
/// copies sum to the unsplit prior).
std::vector<Residual> prior_residuals(const std::vector<SensorState>& first,
                                      const std::vector<SensorParams>& params,
                                      const std::vector<SensorState>& prior_mean,
                                      const ChainConfig& cfg,
                                      int bias_copies = 1);

Residual initial_state_prior(const SensorState& first,
                             const SensorState& prior_mean,
                             const ChainConfig& cfg, int i);

Residual bias_prior(const SensorParams& params, const ChainConfig& cfg, int i,
                    int copy, int bias_copies);

}  // namespace mocap
