#include "mocap/chain_config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace mocap {

namespace {

std::string seg_field(int i, const char* key) {
  return "segments[" + std::to_string(i) + "]." + key;
}

Vec3 read_vec3(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence() || node.size() != 3)
    throw ConfigError(field, "expected a list of 3 numbers");
  Vec3 v;
  try {
    for (int k = 0; k < 3; ++k) v[k] = node[k].as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(field, "expected a list of 3 numbers");
  }
  return v;
}

double read_double(const YAML::Node& node, const std::string& field) {
  try {
    return node.as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(field, "expected a number");
  }
}

void read_noise(const YAML::Node& node, NoiseModel& noise) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError("noise", "expected a mapping");
  const std::pair<const char*, double*> keys[] = {
      {"gyro", &noise.gyro},
      {"accel", &noise.accel},
      {"placement_position", &noise.placement_position},
      {"placement_orientation", &noise.placement_orientation},
      {"bias_prior", &noise.bias_prior},
      {"initial_position", &noise.initial_position},
      {"initial_velocity", &noise.initial_velocity},
      {"initial_orientation", &noise.initial_orientation},
      {"initial_mean_accel", &noise.initial_mean_accel},
  };
  for (const auto& item : node) {
    const auto key = item.first.as<std::string>();
    bool known = false;
    for (const auto& [name, dst] : keys) {
      if (key == name) {
        *dst = read_double(item.second, std::string("noise.") + name);
        known = true;
      }
    }
    if (!known) throw ConfigError("noise." + key, "unknown noise parameter");
  }
}

}  // namespace

void validate(const ChainConfig& cfg) {
  const int n = cfg.n_segments();
  if (n < 1) throw ConfigError("segments", "at least one segment is required");
  for (int i = 0; i < n; ++i) {
    const auto& s = cfg.segments[i];
    if (s.name.empty()) throw ConfigError(seg_field(i, "name"), "missing");
    if (i + 1 < n && !s.distal)
      throw ConfigError(seg_field(i, "distal"),
                        "missing joint offset towards '" +
                            cfg.segments[i + 1].name + "'");
    if (i > 0 && !s.proximal)
      throw ConfigError(seg_field(i, "proximal"),
                        "missing joint offset towards '" +
                            cfg.segments[i - 1].name + "'");
    if (!so3::is_unit(s.mounting, 1e-9))
      throw ConfigError(seg_field(i, "mounting"), "not a unit rotation");
    for (int j = 0; j < i; ++j)
      if (cfg.segments[j].name == s.name)
        throw ConfigError(seg_field(i, "name"), "duplicate name " + s.name);
  }
  if (static_cast<int>(cfg.joint_names.size()) != cfg.n_joints())
    throw ConfigError("joints", "expected " + std::to_string(cfg.n_joints()) +
                                    " joint names");
  if (cfg.designated_sensor < 0 || cfg.designated_sensor >= n)
    throw ConfigError("designated_accel_sensor", "index out of range");
  const std::pair<const char*, double> sigmas[] = {
      {"gyro", cfg.noise.gyro},
      {"accel", cfg.noise.accel},
      {"placement_position", cfg.noise.placement_position},
      {"placement_orientation", cfg.noise.placement_orientation},
      {"bias_prior", cfg.noise.bias_prior},
      {"initial_position", cfg.noise.initial_position},
      {"initial_velocity", cfg.noise.initial_velocity},
      {"initial_orientation", cfg.noise.initial_orientation},
      {"initial_mean_accel", cfg.noise.initial_mean_accel},
  };
  for (const auto& [name, value] : sigmas)
    if (!(value > 0.0) || !std::isfinite(value))
      throw ConfigError(std::string("noise.") + name, "must be > 0");
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt))
    throw ConfigError("rate", "must be > 0");
  if (!cfg.gravity.allFinite()) throw ConfigError("gravity", "not finite");
}

ChainConfig parse_chain_config(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError("<document>", e.what());
  }
  if (!root.IsMap()) throw ConfigError("<document>", "expected a mapping");

  ChainConfig cfg;
  if (root["rate"]) {
    const double rate = read_double(root["rate"], "rate");
    if (!(rate > 0.0)) throw ConfigError("rate", "must be > 0");
    cfg.dt = 1.0 / rate;
  }
  if (root["gravity"]) cfg.gravity = read_vec3(root["gravity"], "gravity");
  read_noise(root["noise"], cfg.noise);

  const auto segs = root["segments"];
  if (!segs || !segs.IsSequence() || segs.size() == 0)
    throw ConfigError("segments", "expected a non-empty list");
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const int i = static_cast<int>(k);
    const auto node = segs[k];
    if (!node.IsMap()) throw ConfigError(seg_field(i, ""), "expected a mapping");
    SegmentSpec s;
    if (!node["name"]) throw ConfigError(seg_field(i, "name"), "missing");
    s.name = node["name"].as<std::string>();
    if (node["proximal"])
      s.proximal = read_vec3(node["proximal"], seg_field(i, "proximal"));
    if (node["distal"])
      s.distal = read_vec3(node["distal"], seg_field(i, "distal"));
    if (node["lever_arm"])
      s.lever_arm = read_vec3(node["lever_arm"], seg_field(i, "lever_arm"));
    if (node["mounting"])
      s.mounting = so3::exp(read_vec3(node["mounting"], seg_field(i, "mounting")));
    cfg.segments.push_back(std::move(s));
  }
  const int n = cfg.n_segments();

  // Optional explicit joint list; it must describe the chain in list order.
  if (const auto joints = root["joints"]) {
    if (!joints.IsSequence()) throw ConfigError("joints", "expected a list");
    if (static_cast<int>(joints.size()) != n - 1)
      throw ConfigError("joints", "non-chain topology: expected " +
                                      std::to_string(n - 1) + " joints, got " +
                                      std::to_string(joints.size()));
    for (std::size_t k = 0; k < joints.size(); ++k) {
      const auto field = "joints[" + std::to_string(k) + "]";
      const auto j = joints[k];
      if (!j["connects"] || !j["connects"].IsSequence() ||
          j["connects"].size() != 2)
        throw ConfigError(field + ".connects", "expected two segment names");
      const auto a = j["connects"][0].as<std::string>();
      const auto b = j["connects"][1].as<std::string>();
      if (a != cfg.segments[k].name || b != cfg.segments[k + 1].name)
        throw ConfigError(field + ".connects",
                          "non-chain topology: joint " + std::to_string(k + 1) +
                              " must connect '" + cfg.segments[k].name +
                              "' and '" + cfg.segments[k + 1].name + "'");
      cfg.joint_names.push_back(j["name"] ? j["name"].as<std::string>()
                                          : "J" + std::to_string(k + 1));
    }
  } else {
    for (int k = 1; k < n; ++k) cfg.joint_names.push_back("J" + std::to_string(k));
  }

  // Default designated sensor: the pelvis if present, otherwise the middle.
  cfg.designated_sensor = (n - 1) / 2;
  for (int i = 0; i < n; ++i)
    if (cfg.segments[i].name == "pelvis") cfg.designated_sensor = i;
  if (const auto d = root["designated_accel_sensor"]) {
    const auto value = d.as<std::string>();
    int found = -1;
    for (int i = 0; i < n; ++i)
      if (cfg.segments[i].name == value) found = i;
    if (found < 0) {
      try {
        found = std::stoi(value) - 1;  // 1-based index
      } catch (const std::exception&) {
        throw ConfigError("designated_accel_sensor",
                          "unknown segment '" + value + "'");
      }
    }
    cfg.designated_sensor = found;
  }

  validate(cfg);
  return cfg;
}

ChainConfig load_chain_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_chain_config(ss.str());
}

ChainConfig lower_body_config() {
  ChainConfig cfg;
  const double thigh = 0.45, shank = 0.43, hip_half_width = 0.1;
  auto seg = [](std::string name, std::optional<Vec3> prox,
                std::optional<Vec3> dist, Vec3 lever, Vec3 mount) {
    SegmentSpec s;
    s.name = std::move(name);
    s.proximal = prox;
    s.distal = dist;
    s.lever_arm = lever;
    s.mounting = so3::exp(mount);
    return s;
  };
  cfg.segments = {
      seg("right_foot", std::nullopt, Vec3(0, 0, 0), Vec3(0.10, 0.0, -0.05),
          Vec3(0.02, -0.03, 0.05)),
      seg("right_lower_leg", Vec3(0, 0, -shank), Vec3(0, 0, 0),
          Vec3(0.05, -0.02, -0.20), Vec3(0.0, 0.04, -0.06)),
      seg("right_upper_leg", Vec3(0, 0, -thigh), Vec3(0, 0, 0),
          Vec3(0.07, -0.03, -0.20), Vec3(-0.03, 0.02, 0.08)),
      seg("pelvis", Vec3(0, -hip_half_width, 0), Vec3(0, hip_half_width, 0),
          Vec3(-0.10, 0.0, 0.02), Vec3(0.0, -0.05, 0.03)),
      seg("left_upper_leg", Vec3(0, 0, 0), Vec3(0, 0, -thigh),
          Vec3(0.07, 0.03, -0.20), Vec3(0.03, 0.02, -0.08)),
      seg("left_lower_leg", Vec3(0, 0, 0), Vec3(0, 0, -shank),
          Vec3(0.05, 0.02, -0.20), Vec3(0.0, 0.04, 0.06)),
      seg("left_foot", Vec3(0, 0, 0), std::nullopt, Vec3(0.10, 0.0, -0.05),
          Vec3(-0.02, -0.03, -0.05)),
  };
  cfg.joint_names = {"right_ankle", "right_knee", "right_hip",
                     "left_hip",    "left_knee",  "left_ankle"};
  cfg.designated_sensor = 3;
  validate(cfg);
  return cfg;
}

ChainConfig straight_chain_config(int n, double segment_length) {
  ChainConfig cfg;
  for (int i = 0; i < n; ++i) {
    SegmentSpec s;
    s.name = "segment" + std::to_string(i + 1);
    if (i > 0) s.proximal = Vec3(0, 0, 0);
    if (i + 1 < n) s.distal = Vec3(0, 0, -segment_length);
    s.lever_arm = Vec3(0.05, 0.01 * i, -0.5 * segment_length);
    s.mounting = so3::exp(Vec3(0.03 * i, -0.02, 0.05));
    cfg.segments.push_back(std::move(s));
  }
  for (int k = 1; k < n; ++k) cfg.joint_names.push_back("J" + std::to_string(k));
  cfg.designated_sensor = (n - 1) / 2;
  validate(cfg);
  return cfg;
}

}  // namespace mocap
