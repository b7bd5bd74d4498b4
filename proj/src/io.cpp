#include "mocap/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

namespace mocap {
namespace fs = std::filesystem;

namespace {

Json vec(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }
Json quat(const Quat& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

Vec3 vec_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Quat quat_from(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("expected 4 numbers");
  return Quat(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& file, int line,
                    const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DatasetError(file, line, "column '" + column + "': cannot parse '" + s + "'");
  return v;
}

// CSV with a header row; columns are looked up by name.
class CsvTable {
 public:
  CsvTable(const fs::path& path, const std::vector<std::string>& required) : file_(path.string()) {
    std::ifstream in(path);
    if (!in) throw DatasetError(file_, 0, "cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw DatasetError(file_, 1, "empty file, header expected");
    const auto header = split(line);
    for (std::size_t k = 0; k < header.size(); ++k) column_[header[k]] = static_cast<int>(k);
    for (const auto& name : required)
      if (!column_.contains(name)) throw DatasetError(file_, 1, "missing column '" + name + "'");
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      auto cells = split(line);
      if (cells.size() != header.size())
        throw DatasetError(file_, lineno, "expected " + std::to_string(header.size()) +
                                              " fields, got " + std::to_string(cells.size()));
      rows_.push_back({lineno, std::move(cells)});
    }
  }

  std::size_t size() const { return rows_.size(); }
  int line(std::size_t r) const { return rows_[r].first; }
  const std::string& text(std::size_t r, const std::string& col) const {
    return rows_[r].second[column_.at(col)];
  }
  double number(std::size_t r, const std::string& col) const {
    return parse_number(text(r, col), file_, line(r), col);
  }
  int integer(std::size_t r, const std::string& col) const {
    const double v = number(r, col);
    if (v != std::floor(v)) throw DatasetError(file_, line(r), "column '" + col + "': not an integer");
    return static_cast<int>(v);
  }
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  std::map<std::string, int> column_;
  std::vector<std::pair<int, std::vector<std::string>>> rows_;
};

}  // namespace

DatasetError::DatasetError(const std::string& file, int line, const std::string& what)
    : std::runtime_error(line > 0 ? file + ":" + std::to_string(line) + ": " + what
                                  : file + ": " + what),
      line_(line) {}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json to_json(const ChainConfig& cfg) {
  Json segs = Json::array();
  for (const auto& s : cfg.segments) {
    Json j{{"name", s.name}, {"lever_arm", vec(s.lever_arm)}, {"mounting_quaternion", quat(s.mounting)}};
    if (s.proximal) j["proximal"] = vec(*s.proximal);
    if (s.distal) j["distal"] = vec(*s.distal);
    segs.push_back(j);
  }
  const auto& n = cfg.noise;
  return {{"segments", segs},
          {"joint_names", cfg.joint_names},
          {"designated_accel_sensor", cfg.designated_sensor + 1},
          {"gravity", vec(cfg.gravity)},
          {"dt", cfg.dt},
          {"noise",
           {{"gyro", n.gyro},
            {"accel", n.accel},
            {"placement_position", n.placement_position},
            {"placement_orientation", n.placement_orientation},
            {"bias_prior", n.bias_prior},
            {"initial_position", n.initial_position},
            {"initial_velocity", n.initial_velocity},
            {"initial_orientation", n.initial_orientation},
            {"initial_mean_accel", n.initial_mean_accel}}}};
}

ChainConfig chain_config_from_json(const Json& j) {
  ChainConfig cfg;
  try {
    for (const auto& s : j.at("segments")) {
      SegmentSpec spec;
      spec.name = s.at("name").get<std::string>();
      if (s.contains("proximal")) spec.proximal = vec_from(s["proximal"]);
      if (s.contains("distal")) spec.distal = vec_from(s["distal"]);
      spec.lever_arm = vec_from(s.at("lever_arm"));
      spec.mounting = quat_from(s.at("mounting_quaternion"));
      cfg.segments.push_back(std::move(spec));
    }
    cfg.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    cfg.designated_sensor = j.at("designated_accel_sensor").get<int>() - 1;
    cfg.gravity = vec_from(j.at("gravity"));
    cfg.dt = j.at("dt").get<double>();
    const auto& n = j.at("noise");
    cfg.noise.gyro = n.at("gyro");
    cfg.noise.accel = n.at("accel");
    cfg.noise.placement_position = n.at("placement_position");
    cfg.noise.placement_orientation = n.at("placement_orientation");
    cfg.noise.bias_prior = n.at("bias_prior");
    cfg.noise.initial_position = n.at("initial_position");
    cfg.noise.initial_velocity = n.at("initial_velocity");
    cfg.noise.initial_orientation = n.at("initial_orientation");
    cfg.noise.initial_mean_accel = n.at("initial_mean_accel");
  } catch (const Json::exception& e) {
    throw ConfigError("config", e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config", e.what());
  }
  validate(cfg);
  return cfg;
}

Json to_json(const GaitParams& g) {
  return {{"stride_frequency", g.stride_frequency}, {"hip_amplitude", g.hip_amplitude},
          {"knee_amplitude", g.knee_amplitude},     {"ankle_amplitude", g.ankle_amplitude},
          {"forward_speed", g.forward_speed},       {"right_phase", g.right_phase},
          {"left_phase", g.left_phase},             {"bob_amplitude", g.bob_amplitude},
          {"sway_amplitude", g.sway_amplitude},     {"yaw_amplitude", g.yaw_amplitude},
          {"anchor_height", g.anchor_height},       {"duration", g.duration},
          {"rate", g.rate}};
}

GaitParams gait_from_json(const Json& j) {
  GaitParams g;
  const std::pair<const char*, double*> keys[] = {
      {"stride_frequency", &g.stride_frequency}, {"hip_amplitude", &g.hip_amplitude},
      {"knee_amplitude", &g.knee_amplitude},     {"ankle_amplitude", &g.ankle_amplitude},
      {"forward_speed", &g.forward_speed},       {"right_phase", &g.right_phase},
      {"left_phase", &g.left_phase},             {"bob_amplitude", &g.bob_amplitude},
      {"sway_amplitude", &g.sway_amplitude},     {"yaw_amplitude", &g.yaw_amplitude},
      {"anchor_height", &g.anchor_height},       {"duration", &g.duration},
      {"rate", &g.rate}};
  for (const auto& [k, dst] : keys)
    if (j.contains(k)) *dst = j[k].get<double>();
  return g;
}

Json to_json(const SensorState& s) {
  Json j{{"p", vec(s.position)}, {"v", vec(s.velocity)}, {"q", quat(s.orientation)}};
  if (s.mean_accel) j["am"] = vec(*s.mean_accel);
  return j;
}

SensorState sensor_state_from_json(const Json& j) {
  SensorState s;
  s.position = vec_from(j.at("p"));
  s.velocity = vec_from(j.at("v"));
  s.orientation = quat_from(j.at("q"));
  if (j.contains("am")) s.mean_accel = vec_from(j["am"]);
  return s;
}

Json to_json(const SegmentState& s) { return {{"p", vec(s.position)}, {"q", quat(s.orientation)}}; }

SegmentState segment_state_from_json(const Json& j) {
  SegmentState s;
  s.position = vec_from(j.at("p"));
  s.orientation = quat_from(j.at("q"));
  return s;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::string csv = "t,sensor,gx,gy,gz,ax,ay,az\n";
  for (int t = 0; t < ds.n_steps(); ++t)
    for (std::size_t i = 0; i < ds.samples[t].size(); ++i) {
      const auto& s = ds.samples[t][i];
      csv += std::to_string(t + 1) + "," + std::to_string(i + 1);
      for (int k = 0; k < 3; ++k) csv += "," + format_double(s.gyro[k]);
      for (int k = 0; k < 3; ++k) csv += "," + format_double(s.accel[k]);
      csv += "\n";
    }
  write_file_atomic(dir / "measurements.csv", csv);

  Json truth_sensors = Json::array(), truth_segments = Json::array(), prior = Json::array(),
       biases = Json::array();
  for (const auto& slice : ds.truth.slices) {
    Json ss = Json::array(), gs = Json::array();
    for (const auto& s : slice.sensors) ss.push_back(to_json(s));
    for (const auto& s : slice.segments) gs.push_back(to_json(s));
    truth_sensors.push_back(ss);
    truth_segments.push_back(gs);
  }
  for (const auto& s : ds.prior_mean) prior.push_back(to_json(s));
  for (const auto& p : ds.truth.params) biases.push_back(vec(p.gyro_bias));
  const Json j{{"format", "mocap-dataset"},
               {"version", 1},
               {"n_steps", ds.n_steps()},
               {"n_sensors", ds.config.n_segments()},
               {"seed", ds.seed},
               {"noise_scale", ds.noise_scale},
               {"config", to_json(ds.config)},
               {"gait", to_json(ds.gait)},
               {"biases", biases},
               {"prior_mean", prior},
               {"truth", {{"sensors", truth_sensors}, {"segments", truth_segments}}}};
  write_file_atomic(dir / "dataset.json", j.dump(1) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path json_path = dir / "dataset.json";
  Json j;
  try {
    j = Json::parse(read_file(json_path));
  } catch (const Json::parse_error& e) {
    throw DatasetError(json_path.string(), 0, e.what());
  } catch (const std::runtime_error& e) {
    throw DatasetError(json_path.string(), 0, e.what());
  }
  Dataset ds;
  int nt = 0, ns = 0;
  try {
    ds.config = chain_config_from_json(j.at("config"));
    ds.gait = gait_from_json(j.value("gait", Json::object()));
    ds.seed = j.value("seed", std::uint64_t{0});
    ds.noise_scale = j.value("noise_scale", 1.0);
    nt = j.at("n_steps").get<int>();
    ns = j.at("n_sensors").get<int>();
    if (ns != ds.config.n_segments()) throw std::invalid_argument("n_sensors disagrees with config");
    for (const auto& s : j.at("prior_mean")) ds.prior_mean.push_back(sensor_state_from_json(s));
    for (const auto& b : j.at("biases")) ds.truth.params.push_back({vec_from(b)});
    if (j.contains("truth")) {
      const auto& ts = j["truth"].at("sensors");
      const auto& tg = j["truth"].at("segments");
      for (std::size_t t = 0; t < ts.size(); ++t) {
        TimeSlice slice;
        for (const auto& s : ts[t]) slice.sensors.push_back(sensor_state_from_json(s));
        for (const auto& s : tg.at(t)) slice.segments.push_back(segment_state_from_json(s));
        ds.truth.slices.push_back(std::move(slice));
      }
    }
  } catch (const Json::exception& e) {
    throw DatasetError(json_path.string(), 0, e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(json_path.string(), 0, e.what());
  }

  const CsvTable csv(dir / "measurements.csv", {"t", "sensor", "gx", "gy", "gz", "ax", "ay", "az"});
  ds.samples.assign(nt, std::vector<ImuSample>(ns));
  std::vector<char> seen(static_cast<std::size_t>(nt) * ns, 0);
  static const char* gyro_cols[] = {"gx", "gy", "gz"};
  static const char* accel_cols[] = {"ax", "ay", "az"};
  for (std::size_t r = 0; r < csv.size(); ++r) {
    const int t = csv.integer(r, "t"), i = csv.integer(r, "sensor");
    if (t < 1 || t > nt) throw DatasetError(csv.file(), csv.line(r), "t out of range");
    if (i < 1 || i > ns) throw DatasetError(csv.file(), csv.line(r), "sensor out of range");
    char& flag = seen[static_cast<std::size_t>(t - 1) * ns + (i - 1)];
    if (flag) throw DatasetError(csv.file(), csv.line(r), "duplicate sample");
    flag = 1;
    auto& s = ds.samples[t - 1][i - 1];
    for (int k = 0; k < 3; ++k) {
      s.gyro[k] = csv.number(r, gyro_cols[k]);
      s.accel[k] = csv.number(r, accel_cols[k]);
    }
  }
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k])
      throw DatasetError(csv.file(), 0, "missing sample t=" + std::to_string(k / ns + 1) +
                                            " sensor=" + std::to_string(k % ns + 1));
  return ds;
}

Json solver_report(const SmootherEstimate& est, const MotionData& data) {
  Json iters = Json::array();
  for (const auto& it : est.log)
    iters.push_back({{"iteration", it.iteration},
                     {"cost", it.cost},
                     {"constraint_violation", it.constraint_violation},
                     {"kkt_residual", it.kkt_residual},
                     {"step_norm", it.step_norm},
                     {"step_length", it.step_length},
                     {"halvings", it.halvings},
                     {"second_order_correction", it.corrected},
                     {"merit", it.merit},
                     {"penalty", it.penalty},
                     {"consensus_deviation", it.consensus_deviation},
                     {"inner_solver_seconds", it.qp_seconds},
                     {"max_factorization_size", it.max_factorization_size}});
  Json biases = Json::array();
  for (const auto& p : est.x.params) biases.push_back(vec(p.gyro_bias));
  return {{"status", to_string(est.status)},
          {"converged", est.converged()},
          {"iterations", est.iterations},
          {"ordering", to_string(est.ordering)},
          {"solver", to_string(est.solver)},
          {"n_steps", data.n_steps()},
          {"n_sensors", data.n_sensors()},
          {"final_cost", est.cost},
          {"final_constraint_violation", est.constraint_violation},
          {"final_kkt_residual", est.kkt_residual},
          {"biases", biases},
          {"log", iters}};
}

void write_estimate(const SmootherEstimate& est, const MotionData& data, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& cfg = data.config;
  std::string seg = "t,segment,px,py,pz,qw,qx,qy,qz\n";
  std::string sen = "t,sensor,px,py,pz,vx,vy,vz,qw,qx,qy,qz\n";
  for (int t = 0; t < est.x.n_steps(); ++t) {
    const auto& slice = est.x.slices[t];
    for (int i = 0; i < cfg.n_segments(); ++i) {
      const auto& s = slice.segments[i];
      seg += std::to_string(t + 1) + "," + cfg.segments[i].name;
      for (int k = 0; k < 3; ++k) seg += "," + format_double(s.position[k]);
      for (double c : {s.orientation.w(), s.orientation.x(), s.orientation.y(), s.orientation.z()})
        seg += "," + format_double(c);
      seg += "\n";
      const auto& r = slice.sensors[i];
      sen += std::to_string(t + 1) + "," + std::to_string(i + 1);
      for (int k = 0; k < 3; ++k) sen += "," + format_double(r.position[k]);
      for (int k = 0; k < 3; ++k) sen += "," + format_double(r.velocity[k]);
      for (double c : {r.orientation.w(), r.orientation.x(), r.orientation.y(), r.orientation.z()})
        sen += "," + format_double(c);
      sen += "\n";
    }
  }
  std::string bias = "sensor,bx,by,bz\n";
  for (int i = 0; i < cfg.n_segments(); ++i) {
    bias += cfg.segments[i].name;
    for (int k = 0; k < 3; ++k) bias += "," + format_double(est.x.params[i].gyro_bias[k]);
    bias += "\n";
  }
  write_file_atomic(dir / "segments.csv", seg);
  write_file_atomic(dir / "sensors.csv", sen);
  write_file_atomic(dir / "biases.csv", bias);
  write_file_atomic(dir / "report.json", solver_report(est, data).dump(2) + "\n");
}

EstimateFiles estimate_from_trajectory(const Trajectory& x, const ChainConfig& cfg) {
  EstimateFiles e;
  for (const auto& s : x.slices) e.segments.push_back(s.segments);
  for (const auto& p : x.params) e.biases.push_back(p.gyro_bias);
  for (const auto& s : cfg.segments) e.segment_names.push_back(s.name);
  return e;
}

EstimateFiles read_estimate(const fs::path& dir) {
  if (!fs::exists(dir / "segments.csv") && fs::exists(dir / "dataset.json")) {
    const Dataset ds = read_dataset(dir);
    return estimate_from_trajectory(ds.truth, ds.config);
  }
  EstimateFiles e;
  const CsvTable seg(dir / "segments.csv", {"t", "segment", "px", "py", "pz", "qw", "qx", "qy", "qz"});
  std::map<std::string, int> index;
  for (std::size_t r = 0; r < seg.size(); ++r) {
    const int t = seg.integer(r, "t");
    const std::string& name = seg.text(r, "segment");
    if (!index.contains(name)) {
      index[name] = static_cast<int>(e.segment_names.size());
      e.segment_names.push_back(name);
    }
    if (t < 1) throw DatasetError(seg.file(), seg.line(r), "t out of range");
    if (static_cast<int>(e.segments.size()) < t) e.segments.resize(t);
    auto& row = e.segments[t - 1];
    const int i = index[name];
    if (static_cast<int>(row.size()) <= i) row.resize(i + 1);
    row[i].position = {seg.number(r, "px"), seg.number(r, "py"), seg.number(r, "pz")};
    row[i].orientation = Quat(seg.number(r, "qw"), seg.number(r, "qx"), seg.number(r, "qy"),
                              seg.number(r, "qz"));
  }
  for (std::size_t t = 0; t < e.segments.size(); ++t)
    if (e.segments[t].size() != e.segment_names.size())
      throw DatasetError(seg.file(), 0, "step " + std::to_string(t + 1) + " is incomplete");
  const CsvTable bias(dir / "biases.csv", {"sensor", "bx", "by", "bz"});
  for (std::size_t r = 0; r < bias.size(); ++r)
    e.biases.emplace_back(bias.number(r, "bx"), bias.number(r, "by"), bias.number(r, "bz"));
  return e;
}

EstimateDiff compare_estimates(const EstimateFiles& a, const EstimateFiles& b) {
  if (a.segments.size() != b.segments.size())
    throw std::invalid_argument("step counts differ: " + std::to_string(a.segments.size()) +
                                " vs " + std::to_string(b.segments.size()));
  if (a.segment_names.size() != b.segment_names.size())
    throw std::invalid_argument("segment counts differ");
  if (a.biases.size() != b.biases.size()) throw std::invalid_argument("bias counts differ");
  EstimateDiff d;
  d.n_steps = static_cast<int>(a.segments.size());
  d.n_segments = static_cast<int>(a.segment_names.size());
  double sp = 0.0, sq = 0.0;
  long count = 0;
  for (int t = 0; t < d.n_steps; ++t)
    for (int i = 0; i < d.n_segments; ++i) {
      const SegmentState& x = a.segments[t][i];
      const SegmentState& y = b.segments[t][i];
      const double ep = (x.position - y.position).norm();
      const double eq = so3::angle_between(x.orientation, y.orientation);
      d.max_position_error = std::max(d.max_position_error, ep);
      d.max_orientation_error = std::max(d.max_orientation_error, eq);
      sp += ep * ep;
      sq += eq * eq;
      ++count;
    }
  if (count > 0) {
    d.rms_position_error = std::sqrt(sp / count);
    d.rms_orientation_error = std::sqrt(sq / count);
  }
  for (std::size_t i = 0; i < a.biases.size(); ++i)
    d.max_bias_error =
        std::max(d.max_bias_error, (a.biases[i] - b.biases[i]).lpNorm<Eigen::Infinity>());
  return d;
}

Json to_json(const EstimateDiff& d) {
  return {{"n_steps", d.n_steps},
          {"n_segments", d.n_segments},
          {"max_position_error_m", d.max_position_error},
          {"rms_position_error_m", d.rms_position_error},
          {"max_orientation_error_rad", d.max_orientation_error},
          {"rms_orientation_error_rad", d.rms_orientation_error},
          {"max_bias_error_rad_s", d.max_bias_error}};
}

}  // namespace mocap
