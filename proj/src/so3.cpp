#include "mocap/so3.hpp"

#include <algorithm>
#include <cmath>

namespace mocap::so3 {

namespace {
constexpr double kSmallAngle = 1e-6;
}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return s;
}

Quat exp(const Vec3& delta) {
  const double angle = delta.norm();
  if (angle < kSmallAngle) {
    // second-order series keeps the result unit to machine precision
    Quat q(1.0 - angle * angle / 8.0, 0.5 * delta.x(), 0.5 * delta.y(),
           0.5 * delta.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * angle;
  const Vec3 v = std::sin(half) / angle * delta;
  return Quat(std::cos(half), v.x(), v.y(), v.z());
}

Vec3 log(const Quat& q_in) {
  Quat q = q_in;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) {
    // atan2(s, w)/s ≈ 1/w (1 - s²/(3w²))
    const double w = q.w();
    return (2.0 / w) * (1.0 - s * s / (3.0 * w * w)) * v;
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return angle / s * v;
}

Mat3 right_jacobian(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 k = skew(phi);
  if (t < kSmallAngle) return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  const double t2 = t * t;
  return Mat3::Identity() - (1.0 - std::cos(t)) / t2 * k +
         (t - std::sin(t)) / (t2 * t) * k * k;
}

Mat3 right_jacobian_inverse(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 k = skew(phi);
  if (t < kSmallAngle) return Mat3::Identity() + 0.5 * k + k * k / 12.0;
  const double t2 = t * t;
  const double c = 1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  return Mat3::Identity() + 0.5 * k + c * k * k;
}

Quat plus(const Quat& q, const Vec3& delta) {
  Quat out = q * exp(delta);
  out.normalize();
  return out;
}

double angle_between(const Quat& a, const Quat& b) {
  // Chord form: exact zero for equal inputs, well conditioned for small angles.
  const double sign = a.coeffs().dot(b.coeffs()) < 0.0 ? -1.0 : 1.0;
  const double chord = (a.coeffs() - sign * b.coeffs()).norm();
  return 4.0 * std::asin(std::min(1.0, 0.5 * chord));
}

Quat axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

bool is_unit(const Quat& q, double tol) {
  return std::abs(q.norm() - 1.0) <= tol;
}

}  // namespace mocap::so3
