#include "mocap/simulator.hpp"

#include <cmath>
#include <random>

namespace mocap {
namespace {

using so3::Mat3;

// Value and first two time derivatives.
struct ScalarJet {
  double v = 0, d = 0, dd = 0;
};
struct RotJet {
  Mat3 R = Mat3::Identity(), dR = Mat3::Zero(), ddR = Mat3::Zero();
};
struct VecJet {
  Vec3 p = Vec3::Zero(), dp = Vec3::Zero(), ddp = Vec3::Zero();
};

ScalarJet sinusoid(double amplitude, double omega, double phase, double time) {
  const double s = std::sin(omega * time + phase), c = std::cos(omega * time + phase);
  return {amplitude * s, amplitude * omega * c, -amplitude * omega * omega * s};
}

RotJet axis_rotation(const Vec3& axis, const ScalarJet& angle) {
  const Mat3 K = so3::skew(axis);
  RotJet out;
  out.R = so3::exp(axis * angle.v).toRotationMatrix();
  out.dR = out.R * K * angle.d;
  out.ddR = out.R * (K * K * angle.d * angle.d + K * angle.dd);
  return out;
}

RotJet operator*(const RotJet& a, const RotJet& b) {
  return {a.R * b.R, a.dR * b.R + a.R * b.dR, a.ddR * b.R + 2.0 * a.dR * b.dR + a.R * b.ddR};
}

RotJet operator*(const RotJet& a, const Mat3& b) { return {a.R * b, a.dR * b, a.ddR * b}; }

VecJet apply(const RotJet& a, const Vec3& v) { return {a.R * v, a.dR * v, a.ddR * v}; }

VecJet operator+(const VecJet& a, const VecJet& b) { return {a.p + b.p, a.dp + b.dp, a.ddp + b.ddp}; }
VecJet operator-(const VecJet& a, const VecJet& b) { return {a.p - b.p, a.dp - b.dp, a.ddp - b.ddp}; }

Vec3 vee(const Mat3& W) { return 0.5 * Vec3(W(2, 1) - W(1, 2), W(0, 2) - W(2, 0), W(1, 0) - W(0, 1)); }

Quat to_quat(const Mat3& R) { return Quat(R).normalized(); }

}  // namespace

int GaitParams::n_steps() const { return static_cast<int>(std::llround(duration * rate)) + 1; }

void GaitParams::validate() const {
  if (!(rate > 0.0)) throw std::invalid_argument("gait rate must be > 0");
  if (!(duration >= 0.0)) throw std::invalid_argument("gait duration must be >= 0");
  if (hip_amplitude < 0 || knee_amplitude < 0 || ankle_amplitude < 0 || bob_amplitude < 0 ||
      sway_amplitude < 0 || yaw_amplitude < 0)
    throw std::invalid_argument("gait amplitudes must be >= 0");
  if (!(stride_frequency >= 0.0)) throw std::invalid_argument("stride frequency must be >= 0");
}

KinematicSample evaluate_gait(const ChainConfig& cfg, const GaitParams& gait, double time) {
  const int n = cfg.n_segments(), anchor = cfg.designated_sensor;
  const double w = 2.0 * std::numbers::pi * gait.stride_frequency;

  std::vector<RotJet> rot(n);
  std::vector<VecJet> pos(n);
  const ScalarJet sway = sinusoid(gait.sway_amplitude, w, 0.0, time);
  const ScalarJet bob = sinusoid(gait.bob_amplitude, 2.0 * w, 0.0, time);
  pos[anchor].p = Vec3(gait.forward_speed * time, sway.v, gait.anchor_height + bob.v);
  pos[anchor].dp = Vec3(gait.forward_speed, sway.d, bob.d);
  pos[anchor].ddp = Vec3(0.0, sway.dd, bob.dd);
  rot[anchor] = axis_rotation(Vec3::UnitZ(), sinusoid(gait.yaw_amplitude, w, 0.0, time));

  // Flexion about the lateral axis; the role follows the distance from the
  // anchor: hip, knee, then ankle.
  auto flexion = [&](int joint) {
    const int dist = joint < anchor ? anchor - joint : joint - anchor + 1;
    const double amp = dist == 1 ? gait.hip_amplitude
                                 : dist == 2 ? gait.knee_amplitude : gait.ankle_amplitude;
    const double phase = (joint < anchor ? gait.right_phase : gait.left_phase) +
                         0.5 * std::numbers::pi * (dist - 1);
    return axis_rotation(Vec3::UnitY(), sinusoid(amp, w, phase, time));
  };
  for (int j = anchor - 1; j >= 0; --j) {
    rot[j] = rot[j + 1] * flexion(j);
    pos[j] = pos[j + 1] + apply(rot[j + 1], cfg.joint_offset_in_upper(j)) -
             apply(rot[j], cfg.joint_offset_in_lower(j));
  }
  for (int j = anchor; j + 1 < n; ++j) {
    rot[j + 1] = rot[j] * flexion(j);
    pos[j + 1] = pos[j] + apply(rot[j], cfg.joint_offset_in_lower(j)) -
                 apply(rot[j + 1], cfg.joint_offset_in_upper(j));
  }

  KinematicSample out;
  out.segments.resize(n);
  out.sensors.resize(n);
  for (int i = 0; i < n; ++i) {
    out.segments[i].position = pos[i].p;
    out.segments[i].orientation = to_quat(rot[i].R);
    out.segment_velocity.push_back(pos[i].dp);
    const RotJet rs = rot[i] * cfg.segments[i].mounting.toRotationMatrix();
    const VecJet ps = pos[i] + apply(rot[i], cfg.segments[i].lever_arm);
    out.sensors[i].position = ps.p;
    out.sensors[i].velocity = ps.dp;
    out.sensors[i].orientation = to_quat(rs.R);
    out.sensor_velocity.push_back(ps.dp);
    out.sensor_acceleration.push_back(ps.ddp);
    out.sensor_angular_velocity.push_back(vee(rs.R.transpose() * rs.dR));
  }
  return out;
}

GroundTruth generate_truth(const ChainConfig& cfg, const GaitParams& gait) {
  validate(cfg);
  gait.validate();
  const int n = cfg.n_segments(), nt = gait.n_steps(), d = cfg.designated_sensor;
  const double dt = gait.dt();

  GroundTruth truth;
  truth.analytic.reserve(nt);
  for (int t = 0; t < nt; ++t) truth.analytic.push_back(evaluate_gait(cfg, gait, t * dt));

  auto& x = truth.states;
  x.params.assign(n, SensorParams{});
  x.slices.resize(nt);
  for (int t = 0; t < nt; ++t) {
    x.slices[t].segments = truth.analytic[t].segments;
    x.slices[t].sensors = truth.analytic[t].sensors;
  }

  // Velocities satisfying p_{t+1} − p_t = dt/2 (v_t + v_{t+1}): the sequence
  // is u_t + (−1)^t v_0; v_0 is fitted to the analytic velocities.
  truth.accel.assign(nt, std::vector<Vec3>(n, Vec3::Zero()));
  for (int i = 0; i < n; ++i) {
    std::vector<Vec3> u(nt, Vec3::Zero());
    for (int t = 0; t + 1 < nt; ++t)
      u[t + 1] = -u[t] + 2.0 * (x.slices[t + 1].sensors[i].position -
                                x.slices[t].sensors[i].position) / dt;
    Vec3 v0 = Vec3::Zero();
    for (int t = 0; t < nt; ++t)
      v0 += (t % 2 ? -1.0 : 1.0) * (truth.analytic[t].sensor_velocity[i] - u[t]);
    v0 /= nt;
    for (int t = 0; t < nt; ++t)
      x.slices[t].sensors[i].velocity = u[t] + (t % 2 ? -1.0 : 1.0) * v0;
    for (int t = 0; t + 1 < nt; ++t)
      truth.accel[t][i] =
          (x.slices[t + 1].sensors[i].velocity - x.slices[t].sensors[i].velocity) / dt;
    truth.accel[nt - 1][i] = nt > 1 ? truth.accel[nt - 2][i] : truth.analytic[0].sensor_acceleration[i];
  }
  for (int t = 0; t < nt; ++t) x.slices[t].sensors[d].mean_accel = truth.accel[t][d];
  return truth;
}

Dataset synthesize_measurements(const GroundTruth& truth, const ChainConfig& cfg,
                                const GaitParams& gait, const std::vector<Vec3>& biases,
                                std::uint64_t seed, double noise_scale) {
  const int n = cfg.n_segments(), nt = truth.states.n_steps();
  if (!biases.empty() && static_cast<int>(biases.size()) != n)
    throw std::invalid_argument("one bias per sensor expected");
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("noise scale must be >= 0");
  const double dt = gait.dt();

  Dataset ds;
  ds.config = cfg;
  ds.config.dt = dt;
  ds.gait = gait;
  ds.seed = seed;
  ds.noise_scale = noise_scale;
  ds.truth = truth.states;
  for (int i = 0; i < n; ++i)
    ds.truth.params[i].gyro_bias = biases.empty() ? Vec3::Zero() : biases[i];

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto noise = [&](double sigma) {
    Vec3 v;
    for (int k = 0; k < 3; ++k) v[k] = normal(rng);
    return Vec3(noise_scale * sigma * v);
  };

  ds.samples.assign(nt, std::vector<ImuSample>(n));
  for (int t = 0; t < nt; ++t)
    for (int i = 0; i < n; ++i) {
      ImuSample& s = ds.samples[t][i];
      const Vec3& b = ds.truth.params[i].gyro_bias;
      if (t == 0) {
        const auto& a = truth.analytic[0];
        s.gyro = a.sensor_angular_velocity[i] + b;
        s.accel = a.sensors[i].orientation.conjugate() * (a.sensor_acceleration[i] - cfg.gravity);
      } else {
        const Quat& q0 = truth.states.slices[t - 1].sensors[i].orientation;
        const Quat& q1 = truth.states.slices[t].sensors[i].orientation;
        s.gyro = so3::log(q0.conjugate() * q1) / dt + b;
        s.accel = q0.conjugate() * (truth.accel[t - 1][i] - cfg.gravity);
      }
      s.gyro += noise(cfg.noise.gyro);
      s.accel += noise(cfg.noise.accel);
    }

  ds.prior_mean = truth.states.slices.front().sensors;
  for (auto& s : ds.prior_mean) {
    s.position += noise(cfg.noise.initial_position);
    s.velocity += noise(cfg.noise.initial_velocity);
    s.orientation = so3::plus(s.orientation, noise(cfg.noise.initial_orientation));
    if (s.mean_accel) *s.mean_accel += noise(cfg.noise.initial_mean_accel);
  }
  return ds;
}

Dataset simulate(const ChainConfig& cfg, const GaitParams& gait, const std::vector<Vec3>& biases,
                 std::uint64_t seed, double noise_scale) {
  ChainConfig c = cfg;
  c.dt = gait.dt();
  return synthesize_measurements(generate_truth(c, gait), c, gait, biases, seed, noise_scale);
}

}  // namespace mocap
