#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "mocap/chain_config.hpp"

namespace mocap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SensorState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();  // world <- sensor
  std::optional<Vec3> mean_accel;       // designated sensor only

  /// 9, or 12 when the mean-acceleration block is present.
  int tangent_dim() const { return mean_accel ? 12 : 9; }
};

struct SegmentState {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();  // world <- segment

  static constexpr int kTangentDim = 6;
};

struct SensorParams {
  Vec3 gyro_bias = Vec3::Zero();  // rad/s, sensor frame
};

struct ImuSample {
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force in sensor frame
};

/// All time-varying variables at one time step.
struct TimeSlice {
  std::vector<SensorState> sensors;
  std::vector<SegmentState> segments;
};

/// Full iterate: trajectory for t = 0..N_T-1 plus one bias per sensor.
struct Trajectory {
  std::vector<TimeSlice> slices;
  std::vector<SensorParams> params;

  int n_steps() const { return static_cast<int>(slices.size()); }
  int n_sensors() const {
    return slices.empty() ? static_cast<int>(params.size())
                          : static_cast<int>(slices.front().sensors.size());
  }
};

struct StateDimensions {
  int per_time_dim = 0;    // 15 N_S + 3
  int total_x_dim = 0;     // per_time_dim * N_T
  int theta_dim = 0;       // 3 N_S
  int constraint_dim = 0;  // 3 (N_S - 1) N_T

  bool operator==(const StateDimensions&) const = default;
};

StateDimensions state_dimensions(int n_sensors, int n_steps);

/// Offsets of every sensor/segment block inside the tangent vector of one
/// time slice. Sensors come first (in chain order), then segments.
class SliceLayout {
 public:
  SliceLayout(int n_sensors, int designated_sensor);

  int n_sensors() const { return n_sensors_; }
  int designated() const { return designated_; }
  int dim() const { return dim_; }
  int sensor_offset(int i) const { return sensor_offsets_[i]; }
  int sensor_dim(int i) const { return i == designated_ ? 12 : 9; }
  int segment_offset(int i) const { return segment_offsets_[i]; }

 private:
  int n_sensors_;
  int designated_;
  int dim_;
  std::vector<int> sensor_offsets_;
  std::vector<int> segment_offsets_;
};

/// Global tangent layout: slices in time order followed by 3 N_S bias
/// coordinates.
struct TrajectoryLayout {
  SliceLayout slice;
  int n_steps;

  int slice_offset(int t) const { return t * slice.dim(); }
  int theta_offset() const { return n_steps * slice.dim(); }
  int dim() const { return theta_offset() + 3 * slice.n_sensors(); }
};

TrajectoryLayout layout_of(const Trajectory& x, int designated_sensor);

void retract(SensorState& s, const Eigen::Ref<const VectorXd>& step);
void retract(SegmentState& s, const Eigen::Ref<const VectorXd>& step);

/// x ⊕ step. Vector blocks add; orientation blocks update q <- q ⊙ exp(δ).
/// Throws std::invalid_argument on a dimension mismatch.
Trajectory retract(const Trajectory& x, const VectorXd& step,
                   int designated_sensor);

/// Max |‖q‖ - 1| over every quaternion in the iterate.
double max_quaternion_norm_error(const Trajectory& x);

}  // namespace mocap
