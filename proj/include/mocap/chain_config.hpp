#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mocap/so3.hpp"

namespace mocap {

using so3::Quat;
using so3::Vec3;

/// Raised for any invalid configuration; `field()` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// One body segment of the chain, with its sensor mounting.
///
/// Joint offsets are expressed in the segment frame and follow chain order:
/// `proximal` is the joint shared with the previous segment in the list,
/// `distal` the joint shared with the next one. For the right leg of the
/// lower-body chain this is the reverse of the anatomical naming.
struct SegmentSpec {
  std::string name;
  std::optional<Vec3> proximal;
  std::optional<Vec3> distal;
  Vec3 lever_arm = Vec3::Zero();       // sensor origin in segment frame [m]
  Quat mounting = Quat::Identity();    // segment <- sensor
};

/// Standard deviations of every Gaussian term in the cost.
struct NoiseModel {
  double gyro = 0.01;                   // rad/s
  double accel = 0.1;                   // m/s^2
  double placement_position = 0.01;     // m
  double placement_orientation = 0.05;  // rad
  double bias_prior = 0.05;             // rad/s
  double initial_position = 0.01;       // m
  double initial_velocity = 0.05;       // m/s
  double initial_orientation = 0.02;    // rad
  double initial_mean_accel = 0.5;      // m/s^2
};

struct ChainConfig {
  std::vector<SegmentSpec> segments;
  std::vector<std::string> joint_names;  // size n_segments() - 1
  int designated_sensor = 0;             // carries the mean-acceleration block
  NoiseModel noise;
  Vec3 gravity{0.0, 0.0, -9.81};
  double dt = 0.1;

  int n_segments() const { return static_cast<int>(segments.size()); }
  int n_joints() const { return std::max(0, n_segments() - 1); }

  /// Offset of joint `j` (0-based, between segments j and j+1) in segment j.
  const Vec3& joint_offset_in_lower(int j) const { return *segments[j].distal; }
  /// Offset of joint `j` in segment j+1.
  const Vec3& joint_offset_in_upper(int j) const {
    return *segments[j + 1].proximal;
  }
};

/// Throws ConfigError naming the first offending field.
void validate(const ChainConfig& cfg);

/// Parses the YAML chain description documented in README.md.
ChainConfig parse_chain_config(std::string_view text);
ChainConfig load_chain_config(const std::filesystem::path& path);

/// Seven-segment lower body: right foot ... pelvis ... left foot.
ChainConfig lower_body_config();

/// Straight chain of `n` identical segments stacked along -z; used by tests
/// and small examples.
ChainConfig straight_chain_config(int n, double segment_length = 0.4);

}  // namespace mocap
