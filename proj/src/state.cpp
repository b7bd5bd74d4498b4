#include "mocap/state.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mocap {

StateDimensions state_dimensions(int n_sensors, int n_steps) {
  StateDimensions d;
  d.per_time_dim = 15 * n_sensors + 3;
  d.total_x_dim = d.per_time_dim * n_steps;
  d.theta_dim = 3 * n_sensors;
  d.constraint_dim = 3 * (n_sensors - 1) * n_steps;
  return d;
}

SliceLayout::SliceLayout(int n_sensors, int designated_sensor)
    : n_sensors_(n_sensors), designated_(designated_sensor) {
  int offset = 0;
  for (int i = 0; i < n_sensors; ++i) {
    sensor_offsets_.push_back(offset);
    offset += sensor_dim(i);
  }
  for (int i = 0; i < n_sensors; ++i) {
    segment_offsets_.push_back(offset);
    offset += SegmentState::kTangentDim;
  }
  dim_ = offset;
}

TrajectoryLayout layout_of(const Trajectory& x, int designated_sensor) {
  return {SliceLayout(x.n_sensors(), designated_sensor), x.n_steps()};
}

void retract(SensorState& s, const Eigen::Ref<const VectorXd>& step) {
  s.position += step.segment<3>(0);
  s.velocity += step.segment<3>(3);
  s.orientation = so3::plus(s.orientation, step.segment<3>(6));
  if (s.mean_accel) *s.mean_accel += step.segment<3>(9);
}

void retract(SegmentState& s, const Eigen::Ref<const VectorXd>& step) {
  s.position += step.segment<3>(0);
  s.orientation = so3::plus(s.orientation, step.segment<3>(3));
}

Trajectory retract(const Trajectory& x, const VectorXd& step,
                   int designated_sensor) {
  const auto layout = layout_of(x, designated_sensor);
  if (step.size() != layout.dim())
    throw std::invalid_argument("retract: step has dimension " +
                                std::to_string(step.size()) + ", expected " +
                                std::to_string(layout.dim()));
  Trajectory out = x;
  for (int t = 0; t < x.n_steps(); ++t) {
    const int base = layout.slice_offset(t);
    auto& slice = out.slices[t];
    for (int i = 0; i < layout.slice.n_sensors(); ++i) {
      retract(slice.sensors[i],
              step.segment(base + layout.slice.sensor_offset(i),
                           layout.slice.sensor_dim(i)));
      retract(slice.segments[i],
              step.segment(base + layout.slice.segment_offset(i), 6));
    }
  }
  for (int i = 0; i < static_cast<int>(out.params.size()); ++i)
    out.params[i].gyro_bias += step.segment<3>(layout.theta_offset() + 3 * i);
  return out;
}

double max_quaternion_norm_error(const Trajectory& x) {
  double worst = 0.0;
  for (const auto& slice : x.slices) {
    for (const auto& s : slice.sensors)
      worst = std::max(worst, std::abs(s.orientation.norm() - 1.0));
    for (const auto& s : slice.segments)
      worst = std::max(worst, std::abs(s.orientation.norm() - 1.0));
  }
  return worst;
}

}  // namespace mocap
