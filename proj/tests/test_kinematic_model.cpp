#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "mocap/problem.hpp"
#include "mocap/simulator.hpp"
#include "test_util.hpp"

using namespace mocap;
using namespace mocap::test;

namespace {

const char* kThreeSegments = R"(
segments:
  - {name: a, distal: [0, 0, -0.4]}
  - {name: b, proximal: [0, 0, 0], distal: [0, 0, -0.4]}
  - {name: c, proximal: [0, 0, 0]}
)";

std::string config_path() { return std::string(MOCAP_SOURCE_DIR) + "/configs/lower_body.yaml"; }

// Places segment j+1 so that joint j closes exactly.
void close_joint(const ChainConfig& cfg, int j, const SegmentState& lower, SegmentState& upper) {
  upper.position = lower.position + lower.orientation * cfg.joint_offset_in_lower(j) -
                   upper.orientation * cfg.joint_offset_in_upper(j);
}

}  // namespace

TEST_CASE("lower-body config file") {
  const ChainConfig cfg = load_chain_config(config_path());
  CHECK(cfg.n_segments() == 7);
  CHECK(cfg.n_joints() == 6);
  CHECK(cfg.joint_names ==
        std::vector<std::string>{"right_ankle", "right_knee", "right_hip", "left_hip",
                                 "left_knee", "left_ankle"});
  CHECK(cfg.designated_sensor == 3);
  CHECK(cfg.segments[3].name == "pelvis");

  // Same chain as the built-in one.
  const ChainConfig ref = lower_body_config();
  for (int i = 0; i < 7; ++i) {
    CHECK(cfg.segments[i].name == ref.segments[i].name);
    CHECK((cfg.segments[i].lever_arm - ref.segments[i].lever_arm).norm() < 1e-15);
    CHECK(so3::angle_between(cfg.segments[i].mounting, ref.segments[i].mounting) < 1e-12);
  }
  for (int j = 0; j < 6; ++j) {
    CHECK((cfg.joint_offset_in_lower(j) - ref.joint_offset_in_lower(j)).norm() < 1e-15);
    CHECK((cfg.joint_offset_in_upper(j) - ref.joint_offset_in_upper(j)).norm() < 1e-15);
  }
}

TEST_CASE("small chains") {
  const ChainConfig one = parse_chain_config("segments:\n  - {name: solo}\n");
  CHECK(one.n_segments() == 1);
  CHECK(one.n_joints() == 0);
  CHECK(state_dimensions(1, 5).constraint_dim == 0);

  const ChainConfig three = parse_chain_config(kThreeSegments);
  CHECK(three.n_joints() == 2);
  CHECK(state_dimensions(3, 1).constraint_dim == 6);
}

TEST_CASE("config errors name the field") {
  auto field_of = [](const std::string& text) {
    try {
      parse_chain_config(text);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<no error>");
  };
  CHECK(field_of("segments:\n  - {name: a}\n  - {name: b, proximal: [0, 0, 0]}\n") ==
        "segments[0].distal");
  CHECK(field_of("segments:\n  - {name: a, distal: [0, 0, 0]}\n  - {name: b}\n") ==
        "segments[1].proximal");
  CHECK(field_of(std::string(kThreeSegments) + "noise: {gyro: 0}\n") == "noise.gyro");
  CHECK(field_of(std::string(kThreeSegments) + "noise: {accel: -1}\n") == "noise.accel");
  CHECK(field_of(std::string(kThreeSegments) +
                 "joints:\n  - {connects: [a, c]}\n  - {connects: [b, c]}\n") ==
        "joints[0].connects");
  CHECK(field_of(std::string(kThreeSegments) + "joints:\n  - {connects: [a, b]}\n") == "joints");
  CHECK(field_of("segments: []\n") == "segments");
  CHECK(field_of(std::string(kThreeSegments) + "designated_accel_sensor: z\n") ==
        "designated_accel_sensor");
}

TEST_CASE("state dimensions") {
  CHECK(state_dimensions(7, 373) == StateDimensions{108, 40284, 21, 6714});
  CHECK(state_dimensions(1, 1) == StateDimensions{18, 18, 3, 0});
  CHECK(state_dimensions(3, 10) == StateDimensions{48, 480, 9, 60});

  // Cross-check against the layout used by the assembly.
  const SliceLayout slice(3, 1);
  CHECK(slice.dim() == 48);
  CHECK(TrajectoryLayout{slice, 10}.dim() == 480 + 9);
}

TEST_CASE("dynamics residual examples") {
  ChainConfig cfg = straight_chain_config(2);
  cfg.designated_sensor = 0;
  SensorState s;
  s.mean_accel = Vec3::Zero();
  SensorParams p;
  p.gyro_bias = Vec3(0.01, -0.02, 0.03);
  ImuSample y;
  y.accel = Vec3(0, 0, 9.81);
  y.gyro = p.gyro_bias;
  const Residual r = dynamics_residual(s, s, p, y, cfg, 0, 1);
  CHECK(r.rows() == 12);
  CHECK(r.value.cwiseAbs().maxCoeff() < 1e-15);

  SensorState other;
  CHECK(dynamics_residual(other, other, p, y, cfg, 1, 1).rows() == 9);
  CHECK_THROWS_AS(dynamics_residual(other, other, p, y, cfg, 0, 1), std::invalid_argument);
  SensorState bent = other;
  bent.orientation.coeffs() *= 1.01;
  CHECK_THROWS_AS(dynamics_residual(bent, other, p, y, cfg, 1, 1), std::invalid_argument);
}

TEST_CASE("noise-free truth has zero dynamics residual") {
  GaitParams gait;
  gait.duration = 3.0;
  const ChainConfig cfg = lower_body_config();
  const Dataset ds = simulate(cfg, gait, std::vector<Vec3>(7, Vec3(0.02, -0.01, 0.03)), 5, 0.0);
  double worst = 0.0;
  for (int t = 1; t < ds.n_steps(); ++t)
    for (int i = 0; i < 7; ++i) {
      const Residual r =
          dynamics_residual(ds.truth.slices[t - 1].sensors[i], ds.truth.slices[t].sensors[i],
                            ds.truth.params[i], ds.samples[t][i], ds.config, i, t);
      worst = std::max(worst, r.value.cwiseAbs().maxCoeff());
    }
  CHECK(worst < 1e-10);
}

TEST_CASE("placement residual examples") {
  const ChainConfig cfg = lower_body_config();
  Rng rng(3);
  for (int i = 0; i < cfg.n_segments(); ++i) {
    const SegmentState seg = random_segment(rng);
    SensorState sen = random_sensor(rng, i == cfg.designated_sensor);
    sen.position = seg.position + seg.orientation * cfg.segments[i].lever_arm;
    sen.orientation = seg.orientation * cfg.segments[i].mounting;
    CHECK(placement_residual(sen, seg, cfg, i, 0).value.cwiseAbs().maxCoeff() < 1e-12);
  }

  ChainConfig plain = straight_chain_config(2);
  plain.segments[0].lever_arm.setZero();
  plain.segments[0].mounting = Quat::Identity();
  SegmentState seg = random_segment(rng);
  SensorState sen;
  sen.position = seg.position;
  sen.orientation = seg.orientation;
  CHECK(placement_residual(sen, seg, plain, 0, 0).value.norm() < 1e-12);
  CHECK_THROWS_AS(placement_residual(sen, seg, plain, 5, 0), std::out_of_range);
}

TEST_CASE("joint constraint examples") {
  const ChainConfig cfg = lower_body_config();
  Rng rng(4);
  std::vector<SegmentState> segs(7);
  segs[0] = random_segment(rng);
  for (int j = 0; j < 6; ++j) {
    segs[j + 1].orientation = random_quat(rng);
    close_joint(cfg, j, segs[j], segs[j + 1]);
  }
  for (int j = 0; j < 6; ++j)
    CHECK(joint_constraint(segs[j], segs[j + 1], cfg, j, 0).value.norm() < 1e-12);

  SegmentState moved = segs[3];
  moved.position += Vec3(1, 0, 0);
  const Vec3 c = joint_constraint(segs[2], moved, cfg, 2, 0).value;
  CHECK((c - Vec3(-1, 0, 0)).norm() < 1e-12);

  CHECK_THROWS_AS(joint_constraint(segs[0], segs[1], cfg, 6, 0), std::out_of_range);
  CHECK_THROWS_AS(joint_constraint(segs[0], segs[1], cfg, -1, 0), std::out_of_range);
}

TEST_CASE("joint constraint is linear in positions") {
  const ChainConfig cfg = straight_chain_config(3);
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    SegmentState a, b;
    a.position = random_vec(rng);
    b.position = random_vec(rng);
    const Vec3 d = random_vec(rng, 2.0);
    const Vec3 c0 = joint_constraint(a, b, cfg, 0, 0).value;
    SegmentState a2 = a;
    a2.position += d;
    CHECK((joint_constraint(a2, b, cfg, 0, 0).value - c0 - d).norm() < 1e-12);
    SegmentState b2 = b;
    b2.position += d;
    CHECK((joint_constraint(a, b2, cfg, 0, 0).value - c0 + d).norm() < 1e-12);
  }
}

TEST_CASE("Jacobians match central differences") {
  const ChainConfig cfg = lower_body_config();
  Rng rng(11);
  const int d = cfg.designated_sensor;
  double worst = 0.0;
  auto check = [&](const MatrixXd& analytic, const MatrixXd& numeric) {
    const double e = relative_error(analytic, numeric);
    worst = std::max(worst, e);
    CHECK(e < 1e-5);
  };

  SUBCASE("dynamics") {
    for (int k = 0; k < 100; ++k) {
      const int i = k % 7;
      const SensorState prev = random_sensor(rng, i == d);
      SensorParams p;
      p.gyro_bias = random_vec(rng, 0.2);
      ImuSample y{random_vec(rng, 3.0), random_vec(rng, 15.0)};
      SensorState curr = random_sensor(rng, i == d);
      curr.orientation = so3::plus(prev.orientation, cfg.dt * (y.gyro - p.gyro_bias) + random_vec(rng, 0.5));
      const int t = 1 + k;
      auto f_prev = [&](const SensorState& s) { return dynamics_residual(s, curr, p, y, cfg, i, t).value; };
      auto f_curr = [&](const SensorState& s) { return dynamics_residual(prev, s, p, y, cfg, i, t).value; };
      auto f_bias = [&](const SensorParams& q) { return dynamics_residual(prev, curr, q, y, cfg, i, t).value; };
      const Residual r = dynamics_residual(prev, curr, p, y, cfg, i, t);
      REQUIRE(r.blocks.size() == 3);
      CHECK(r.blocks[0].key == VarKey{VarKind::Sensor, i, t - 1});
      CHECK(r.blocks[1].key == VarKey{VarKind::Sensor, i, t});
      CHECK(r.blocks[2].key == VarKey{VarKind::Bias, i, t});
      check(r.blocks[0].jacobian,
            numeric_jacobian<SensorState>(prev, prev.tangent_dim(), f_prev));
      check(r.blocks[1].jacobian,
            numeric_jacobian<SensorState>(curr, curr.tangent_dim(), f_curr));
      check(r.blocks[2].jacobian, numeric_jacobian<SensorParams>(p, 3, f_bias));
    }
  }
  SUBCASE("placement") {
    for (int k = 0; k < 100; ++k) {
      const int i = k % 7;
      const SegmentState seg = random_segment(rng);
      SensorState sen = random_sensor(rng, i == d);
      sen.orientation = so3::plus(seg.orientation * cfg.segments[i].mounting, random_vec(rng, 0.8));
      auto f_sen = [&](const SensorState& s) { return placement_residual(s, seg, cfg, i, 0).value; };
      auto f_seg = [&](const SegmentState& s) { return placement_residual(sen, s, cfg, i, 0).value; };
      const Residual r = placement_residual(sen, seg, cfg, i, 0);
      check(r.blocks[0].jacobian, numeric_jacobian<SensorState>(sen, sen.tangent_dim(), f_sen));
      check(r.blocks[1].jacobian, numeric_jacobian<SegmentState>(seg, 6, f_seg));
    }
  }
  SUBCASE("joint") {
    for (int k = 0; k < 100; ++k) {
      const int j = k % 6;
      const SegmentState a = random_segment(rng), b = random_segment(rng);
      auto f_a = [&](const SegmentState& s) { return joint_constraint(s, b, cfg, j, 0).value; };
      auto f_b = [&](const SegmentState& s) { return joint_constraint(a, s, cfg, j, 0).value; };
      const Residual r = joint_constraint(a, b, cfg, j, 0);
      check(r.blocks[0].jacobian, numeric_jacobian<SegmentState>(a, 6, f_a));
      check(r.blocks[1].jacobian, numeric_jacobian<SegmentState>(b, 6, f_b));
    }
  }
  SUBCASE("priors") {
    for (int k = 0; k < 100; ++k) {
      const int i = k % 7;
      const SensorState mean = random_sensor(rng, i == d);
      SensorState x = mean;
      retract(x, random_vector(rng, x.tangent_dim(), 0.8));
      auto f = [&](const SensorState& s) { return initial_state_prior(s, mean, cfg, i).value; };
      check(initial_state_prior(x, mean, cfg, i).blocks[0].jacobian,
            numeric_jacobian<SensorState>(x, x.tangent_dim(), f));
      SensorParams p;
      p.gyro_bias = random_vec(rng, 0.1);
      auto fb = [&](const SensorParams& q) { return bias_prior(q, cfg, i, 0, 4).value; };
      check(bias_prior(p, cfg, i, 0, 4).blocks[0].jacobian, numeric_jacobian<SensorParams>(p, 3, fb));
    }
  }
  MESSAGE("worst relative Jacobian error " << worst);
}

TEST_CASE("prior residual examples") {
  ChainConfig cfg = straight_chain_config(3);
  Rng rng(8);
  std::vector<SensorState> mean;
  for (int i = 0; i < 3; ++i) mean.push_back(random_sensor(rng, i == cfg.designated_sensor));
  const std::vector<SensorParams> zero(3);
  for (const auto& r : prior_residuals(mean, zero, mean, cfg, 1)) CHECK(r.value.norm() < 1e-12);

  // Splitting the bias prior over N_T = 4 copies keeps the total.
  std::vector<SensorParams> theta(3);
  for (auto& p : theta) p.gyro_bias = random_vec(rng, 0.1);
  double split = 0.0, single = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 4; ++c) split += bias_prior(theta[i], cfg, i, c, 4).cost();
    single += bias_prior(theta[i], cfg, i, 0, 1).cost();
  }
  CHECK(std::abs(split - single) < 1e-12);
  CHECK(prior_residuals(mean, theta, mean, cfg, 4).size() == 3 + 3 * 4);

  cfg.noise.bias_prior = 0.01;
  SensorParams p;
  p.gyro_bias = Vec3(0.01, 0, 0);
  CHECK((bias_prior(p, cfg, 0, 0, 1).whitened() - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("whitening scales with 1/sigma") {
  const ChainConfig cfg = lower_body_config();
  Rng rng(9);
  const SensorState prev = random_sensor(rng, false), curr = random_sensor(rng, false);
  const SegmentState seg = random_segment(rng);
  SensorParams p;
  p.gyro_bias = random_vec(rng, 0.1);
  const ImuSample y{random_vec(rng), random_vec(rng, 10.0)};
  for (double k : {0.5, 2.0, 8.0}) {
    ChainConfig scaled = cfg;
    scaled.noise.gyro *= k;
    scaled.noise.accel *= k;
    scaled.noise.placement_position *= k;
    scaled.noise.placement_orientation *= k;
    scaled.noise.bias_prior *= k;
    const VectorXd a = dynamics_residual(prev, curr, p, y, cfg, 0, 1).whitened();
    const VectorXd b = dynamics_residual(prev, curr, p, y, scaled, 0, 1).whitened();
    CHECK((b - a / k).cwiseAbs().maxCoeff() <= 1e-14 * a.cwiseAbs().maxCoeff());
    const VectorXd c = placement_residual(curr, seg, cfg, 0, 1).whitened();
    const VectorXd e = placement_residual(curr, seg, scaled, 0, 1).whitened();
    CHECK((e - c / k).cwiseAbs().maxCoeff() <= 1e-14 * c.cwiseAbs().maxCoeff());
    const VectorXd f = bias_prior(p, cfg, 0, 0, 1).whitened();
    const VectorXd g = bias_prior(p, scaled, 0, 0, 1).whitened();
    CHECK((g - f / k).cwiseAbs().maxCoeff() <= 1e-14 * f.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("retraction") {
  const Dataset ds = [] {
    GaitParams gait;
    gait.duration = 0.5;
    return simulate(straight_chain_config(3), gait, {}, 2);
  }();
  const Trajectory& x = ds.truth;
  const int d = ds.config.designated_sensor;
  const int n = layout_of(x, d).dim();

  SUBCASE("zero step") {
    const Trajectory y = retract(x, VectorXd::Zero(n), d);
    for (int t = 0; t < x.n_steps(); ++t)
      for (int i = 0; i < 3; ++i) {
        CHECK(y.slices[t].sensors[i].position == x.slices[t].sensors[i].position);
        CHECK(y.slices[t].segments[i].orientation.coeffs() ==
              x.slices[t].segments[i].orientation.coeffs());
      }
  }
  SUBCASE("half turn about x") {
    const Quat q = so3::plus(Quat::Identity(), Vec3(std::numbers::pi, 0, 0));
    CHECK(std::abs(std::abs(q.x()) - 1.0) < 1e-12);
    CHECK(std::abs(q.w()) < 1e-12);
  }
  SUBCASE("dimension mismatch") { CHECK_THROWS_AS(retract(x, VectorXd::Zero(n + 1), d), std::invalid_argument); }
  SUBCASE("composition is additive to first order") {
    Rng rng(6);
    const VectorXd u = random_vector(rng, n).normalized(), v = random_vector(rng, n).normalized();
    for (double s : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
      const Trajectory a = retract(retract(x, s * u, d), s * v, d);
      const Trajectory b = retract(x, s * (u + v), d);
      double gap = 0.0;
      for (int t = 0; t < x.n_steps(); ++t)
        for (int i = 0; i < 3; ++i) {
          gap = std::max(gap, so3::angle_between(a.slices[t].sensors[i].orientation,
                                                 b.slices[t].sensors[i].orientation));
          gap = std::max(gap, (a.slices[t].sensors[i].position - b.slices[t].sensors[i].position).norm());
        }
      CHECK(gap <= 1.0 * s * s);
    }
  }
  SUBCASE("quaternions stay unit") {
    Rng rng(7);
    Trajectory y = x;
    for (int k = 0; k < 20; ++k) y = retract(y, random_vector(rng, n, 2.0), d);
    CHECK(max_quaternion_norm_error(y) < 1e-9);
  }
}

TEST_CASE("noise-free cost at truth is zero") {
  GaitParams gait;
  gait.duration = 4.9;
  // Zero bias: the bias prior is centred at zero.
  const Dataset ds = simulate(lower_body_config(), gait, {}, 1, 0.0);
  const Linearization lin = linearize(ds.truth, ds.motion_data());
  long rows = 0;
  for (const auto& c : lin.costs) rows += c.residual.rows();
  CHECK(total_cost(lin) <= 1e-16 * rows);
  CHECK(max_constraint_violation(lin) <= 1e-12);
}
