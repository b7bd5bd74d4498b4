#pragma once

// File formats shared by the command-line tools: JSON encodings of configs
// and states, and the estimate export.

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mocap/simulator.hpp"
#include "mocap/sqp.hpp"

namespace mocap {

using Json = nlohmann::json;

Json to_json(const ChainConfig& cfg);
ChainConfig chain_config_from_json(const Json& j);
Json to_json(const GaitParams& g);
GaitParams gait_from_json(const Json& j);
Json to_json(const SensorState& s);
SensorState sensor_state_from_json(const Json& j);
Json to_json(const SegmentState& s);
SegmentState segment_state_from_json(const Json& j);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Estimate directory: segments.csv (t, segment, px, py, pz, qw, qx, qy, qz),
/// sensors.csv, biases.csv (sensor, bx, by, bz) and report.json.
struct EstimateFiles {
  std::vector<std::vector<SegmentState>> segments;  // [t][segment]
  std::vector<Vec3> biases;
  std::vector<std::string> segment_names;
};

Json solver_report(const SmootherEstimate& est, const MotionData& data);
void write_estimate(const SmootherEstimate& est, const MotionData& data,
                    const std::filesystem::path& dir);
/// Reads an estimate directory, or a dataset directory (its ground truth).
EstimateFiles read_estimate(const std::filesystem::path& dir);
EstimateFiles estimate_from_trajectory(const Trajectory& x, const ChainConfig& cfg);

/// Pointwise differences between two estimates over all steps and segments.
struct EstimateDiff {
  int n_steps = 0;
  int n_segments = 0;
  double max_position_error = 0.0;  // m
  double rms_position_error = 0.0;
  double max_orientation_error = 0.0;  // rad, geodesic
  double rms_orientation_error = 0.0;
  double max_bias_error = 0.0;  // rad/s, max-norm

  double worst() const {
    return std::max({max_position_error, max_orientation_error, max_bias_error});
  }
};

/// Throws std::invalid_argument when step, segment or bias counts differ.
EstimateDiff compare_estimates(const EstimateFiles& a, const EstimateFiles& b);
Json to_json(const EstimateDiff& d);

}  // namespace mocap
