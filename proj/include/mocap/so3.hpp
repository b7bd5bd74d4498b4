#pragma once

// Unit-quaternion helpers for the multiplicative (right) tangent
// parametrization q ⊕ δ = q ⊙ exp(δ), with exp(δ) a rotation by |δ| rad
// about δ/|δ|.

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mocap::so3 {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

Mat3 skew(const Vec3& v);

Quat exp(const Vec3& delta);

/// Rotation vector of q, taken on the shortest branch (angle in [0, π]).
Vec3 log(const Quat& q);

/// Right Jacobian of exp: exp(φ + δ) ≈ exp(φ) ⊙ exp(Jr(φ)·δ).
Mat3 right_jacobian(const Vec3& phi);

/// Inverse right Jacobian: log(exp(φ) ⊙ exp(δ)) ≈ φ + Jr⁻¹(φ)·δ.
Mat3 right_jacobian_inverse(const Vec3& phi);

Quat plus(const Quat& q, const Vec3& delta);

/// Geodesic distance in radians.
double angle_between(const Quat& a, const Quat& b);

/// Rotation about a fixed axis by `angle` radians.
Quat axis_angle(const Vec3& axis, double angle);

bool is_unit(const Quat& q, double tol = 1e-9);

}  // namespace mocap::so3
