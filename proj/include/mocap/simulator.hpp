#pragma once

// Synthetic walking data on a kinematic chain: closed-form sinusoidal gait,
// forward kinematics from the designated segment, and IMU synthesis.

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mocap/problem.hpp"

namespace mocap {

struct GaitParams {
  double stride_frequency = 0.9;  // Hz
  double hip_amplitude = 0.35;    // rad
  double knee_amplitude = 0.45;   // rad
  double ankle_amplitude = 0.2;   // rad
  double forward_speed = 1.1;     // m/s, along world x
  double right_phase = 0.0;       // rad, joints before the anchor
  double left_phase = std::numbers::pi;
  double bob_amplitude = 0.02;    // m, vertical, at twice the stride frequency
  double sway_amplitude = 0.03;   // m, lateral
  double yaw_amplitude = 0.08;    // rad, anchor segment about world z
  double anchor_height = 0.95;    // m
  double duration = 37.2;         // s
  double rate = 10.0;             // Hz

  /// round(duration · rate) + 1 samples.
  int n_steps() const;
  double dt() const { return 1.0 / rate; }
  void validate() const;
};

/// Analytic state of the chain at one instant.
struct KinematicSample {
  std::vector<SegmentState> segments;
  std::vector<SensorState> sensors;           // position + orientation
  std::vector<Vec3> sensor_velocity;          // world
  std::vector<Vec3> sensor_acceleration;      // world
  std::vector<Vec3> sensor_angular_velocity;  // sensor frame
  std::vector<Vec3> segment_velocity;         // world
};

KinematicSample evaluate_gait(const ChainConfig& cfg, const GaitParams& gait, double time);

/// Ground truth on the sampling grid. Poses are exact samples of the closed
/// form; velocities and mean accelerations are the unique discrete sequence
/// that makes the strapdown transition exact (velocities fitted to the
/// analytic ones in least squares).
struct GroundTruth {
  Trajectory states;
  std::vector<std::vector<Vec3>> accel;  // [t][sensor], world, drives t -> t+1
  std::vector<KinematicSample> analytic; // [t]
};

GroundTruth generate_truth(const ChainConfig& cfg, const GaitParams& gait);

struct Dataset {
  ChainConfig config;
  GaitParams gait;
  std::vector<std::vector<ImuSample>> samples;  // [t][sensor]
  Trajectory truth;                             // biases in truth.params
  std::vector<SensorState> prior_mean;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;

  int n_steps() const { return static_cast<int>(samples.size()); }
  MotionData motion_data() const { return {config, samples, prior_mean}; }
};

/// gyro = rotation over the step / dt + bias + noise,
/// accel = R(q_{t-1})ᵀ(a_{t-1} − g) + noise. `noise_scale` multiplies the
/// configured standard deviations (0 gives exact data). The prior mean is
/// the first true state, perturbed by the initial-state deviations.
Dataset synthesize_measurements(const GroundTruth& truth, const ChainConfig& cfg,
                                const GaitParams& gait, const std::vector<Vec3>& biases,
                                std::uint64_t seed, double noise_scale = 1.0);

/// Convenience: generate_truth + synthesize_measurements.
Dataset simulate(const ChainConfig& cfg, const GaitParams& gait,
                 const std::vector<Vec3>& biases, std::uint64_t seed,
                 double noise_scale = 1.0);

/// Raised for malformed dataset files; carries the line when known.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& file, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// measurements.csv (t, sensor, gx, gy, gz, ax, ay, az) and dataset.json.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace mocap
