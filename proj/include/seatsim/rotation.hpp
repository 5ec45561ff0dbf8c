#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace seatsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

/// Unit quaternion for the rotation vector `phi` (axis * angle).
inline Quat quat_exp(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, phi / angle));
}

/// Rotation vector of a unit quaternion, angle in [0, pi].
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

/// Inverse right Jacobian of SO(3): d(theta)/dt = Jr^{-1}(theta) * omega
/// when the rotation is perturbed on the right by the body-frame rate omega.
inline Mat3 so3_right_jacobian_inv(const Vec3& theta) {
  const double a = theta.norm();
  const Mat3 k = skew(theta);
  if (a < 1e-6) return Mat3::Identity() + 0.5 * k + (1.0 / 12.0) * k * k;
  const double coef = 1.0 / (a * a) - (1.0 + std::cos(a)) / (2.0 * a * std::sin(a));
  return Mat3::Identity() + 0.5 * k + coef * k * k;
}

}  // namespace seatsim
