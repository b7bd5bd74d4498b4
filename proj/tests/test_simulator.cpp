#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mocap/simulator.hpp"
#include "test_util.hpp"

using namespace mocap;
using namespace mocap::test;
namespace fs = std::filesystem;

namespace {

GaitParams static_gait(double duration = 1.0) {
  GaitParams g;
  g.hip_amplitude = g.knee_amplitude = g.ankle_amplitude = 0.0;
  g.forward_speed = g.bob_amplitude = g.sway_amplitude = g.yaw_amplitude = 0.0;
  g.duration = duration;
  return g;
}

GaitParams short_gait(double duration = 2.0) {
  GaitParams g;
  g.duration = duration;
  return g;
}

std::vector<Vec3> zero_biases(int n) { return std::vector<Vec3>(n, Vec3::Zero()); }

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mocap_test_sim_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_CASE("sample count follows duration and rate") {
  GaitParams g;
  g.duration = 37.0;
  CHECK(g.n_steps() == 371);
  g.duration = 37.2;
  CHECK(g.n_steps() == 373);
  g.duration = 0.1;
  CHECK(g.n_steps() == 2);
  g.rate = 0.0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("joints stay connected") {
  const ChainConfig cfg = lower_body_config();
  for (const GaitParams& g : {static_gait(), short_gait()}) {
    const GroundTruth truth = generate_truth(cfg, g);
    const Dataset ds = synthesize_measurements(truth, cfg, g, zero_biases(7), 1, 0.0);
    const Linearization lin = linearize(truth.states, ds.motion_data());
    CHECK(max_constraint_violation(lin) <= 1e-12);
  }
}

TEST_CASE("analytic velocities match finite differences") {
  const ChainConfig cfg = lower_body_config();
  const GaitParams g = short_gait();
  for (double t : {0.3, 1.1, 1.7}) {
    const KinematicSample s = evaluate_gait(cfg, g, t);
    for (double h : {1e-4, 1e-5, 1e-6}) {
      const KinematicSample p = evaluate_gait(cfg, g, t + h), m = evaluate_gait(cfg, g, t - h);
      for (int i = 0; i < cfg.n_segments(); ++i) {
        const Vec3 v = (p.sensors[i].position - m.sensors[i].position) / (2 * h);
        CHECK((v - s.sensor_velocity[i]).norm() <= 1e-6);
        const Vec3 sv = (p.segments[i].position - m.segments[i].position) / (2 * h);
        CHECK((sv - s.segment_velocity[i]).norm() <= 1e-6);
        const Vec3 w = so3::log(m.sensors[i].orientation.conjugate() * p.sensors[i].orientation) / (2 * h);
        CHECK((w - s.sensor_angular_velocity[i]).norm() <= 1e-6);
      }
      if (h == 1e-4)
        for (int i = 0; i < cfg.n_segments(); ++i) {
          const Vec3 a = (p.sensor_velocity[i] - m.sensor_velocity[i]) / (2 * h);
          CHECK((a - s.sensor_acceleration[i]).norm() <= 1e-5);
        }
    }
  }
}

TEST_CASE("static pose measures gravity only") {
  ChainConfig cfg = lower_body_config();
  const GaitParams g = static_gait();
  // Mount every sensor so that its frame is aligned with the world.
  const KinematicSample rest = evaluate_gait(cfg, g, 0.0);
  for (int i = 0; i < cfg.n_segments(); ++i)
    cfg.segments[i].mounting = rest.segments[i].orientation.conjugate();
  const Dataset ds = simulate(cfg, g, zero_biases(7), 3, 0.0);
  for (int t = 1; t < ds.n_steps(); ++t)
    for (const ImuSample& m : ds.samples[t]) {
      CHECK((m.accel - Vec3(0.0, 0.0, 9.81)).norm() <= 1e-12);
      CHECK(m.gyro.norm() <= 1e-12);
    }
}

TEST_CASE("gyro bias appears in the gyro samples") {
  const ChainConfig cfg = lower_body_config();
  const GaitParams g = static_gait();
  std::vector<Vec3> biases = zero_biases(7);
  biases[4] = Vec3(0.01, -0.02, 0.005);
  const Dataset ds = simulate(cfg, g, biases, 3, 0.0);
  CHECK((ds.samples[3][4].gyro - biases[4]).norm() <= 1e-12);
  CHECK((ds.truth.params[4].gyro_bias - biases[4]).norm() == 0.0);
}

TEST_CASE("same seed gives byte-identical files") {
  const ChainConfig cfg = lower_body_config();
  const GaitParams g = short_gait(1.0);
  const fs::path a = scratch_dir("a"), b = scratch_dir("b"), c = scratch_dir("c");
  write_dataset(simulate(cfg, g, zero_biases(7), 42), a);
  write_dataset(simulate(cfg, g, zero_biases(7), 42), b);
  write_dataset(simulate(cfg, g, zero_biases(7), 43), c);
  CHECK(slurp(a / "measurements.csv") == slurp(b / "measurements.csv"));
  CHECK(slurp(a / "dataset.json") == slurp(b / "dataset.json"));
  CHECK(slurp(a / "measurements.csv") != slurp(c / "measurements.csv"));
}

TEST_CASE("dataset round trip") {
  const ChainConfig cfg = lower_body_config();
  const Dataset ds = simulate(cfg, short_gait(1.0), zero_biases(7), 5);
  const fs::path dir = scratch_dir("rt");
  write_dataset(ds, dir);
  const Dataset back = read_dataset(dir);
  REQUIRE(back.n_steps() == ds.n_steps());
  CHECK(back.seed == 5);
  for (int t = 0; t < ds.n_steps(); ++t)
    for (int i = 0; i < 7; ++i) {
      CHECK(back.samples[t][i].gyro == ds.samples[t][i].gyro);
      CHECK(back.samples[t][i].accel == ds.samples[t][i].accel);
    }
  for (int i = 0; i < 7; ++i) {
    CHECK(back.prior_mean[i].position == ds.prior_mean[i].position);
    CHECK(back.truth.params[i].gyro_bias == ds.truth.params[i].gyro_bias);
  }
  CHECK(total_cost(back.truth, back.motion_data()) == total_cost(ds.truth, ds.motion_data()));
}

TEST_CASE("malformed measurement files") {
  const ChainConfig cfg = lower_body_config();
  const fs::path dir = scratch_dir("bad");
  write_dataset(simulate(cfg, short_gait(1.0), zero_biases(7), 5), dir);
  const std::string good = slurp(dir / "measurements.csv");

  SUBCASE("missing column is named") {
    std::string s = good;
    s.replace(s.find(",gz"), 3, ",gq");
    spit(dir / "measurements.csv", s);
    try {
      read_dataset(dir);
      FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
      CHECK(std::string(e.what()).find("gz") != std::string::npos);
      CHECK(e.line() == 1);
    }
  }
  SUBCASE("bad value reports its line") {
    std::istringstream in(good);
    std::string line, s;
    for (int k = 1; std::getline(in, line); ++k) {
      if (k == 5) line = line.substr(0, line.rfind(',')) + ",abc";
      s += line + "\n";
    }
    spit(dir / "measurements.csv", s);
    try {
      read_dataset(dir);
      FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
      CHECK(e.line() == 5);
      CHECK(std::string(e.what()).find("az") != std::string::npos);
    }
  }
  SUBCASE("missing row") {
    std::string s = good;
    s.erase(s.rfind('\n', s.size() - 2) + 1);
    spit(dir / "measurements.csv", s);
    CHECK_THROWS_AS(read_dataset(dir), DatasetError);
  }
}
