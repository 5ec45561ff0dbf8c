#pragma once

// Joint-space equations of motion M(q) qdd + h(q, qd) = tau and the fixed-step
// integrators. The seat frame is the reference frame: its prescribed
// translational acceleration enters as a uniform inertial load, so
// gravity_eff = g - a_seat.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "seatsim/errors.hpp"
#include "seatsim/multibody.hpp"

namespace seatsim {

inline const Vec3 kGravity(0.0, 0.0, -9.81);

enum class Axis { fore_aft = 0, lateral = 1, vertical = 2 };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::fore_aft: return "fore_aft";
    case Axis::lateral: return "lateral";
    case Axis::vertical: return "vertical";
  }
  return "?";
}

/// Prescribed seat-frame acceleration along one axis, sampled every `dt`.
/// Velocity and position are trapezoidal running integrals of the samples.
struct SeatMotion {
  Axis axis = Axis::vertical;
  double dt = 1e-3;
  std::vector<double> acceleration;
  std::vector<double> velocity;
  std::vector<double> position;

  static SeatMotion from_acceleration(Axis axis, double dt, std::vector<double> accel) {
    SeatMotion m;
    m.axis = axis;
    m.dt = dt;
    m.acceleration = std::move(accel);
    const std::size_t n = m.acceleration.size();
    m.velocity.assign(n, 0.0);
    m.position.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      m.velocity[i] = m.velocity[i - 1] + 0.5 * dt * (m.acceleration[i - 1] + m.acceleration[i]);
      m.position[i] = m.position[i - 1] + 0.5 * dt * (m.velocity[i - 1] + m.velocity[i]);
    }
    return m;
  }

  /// Stationary seat covering `duration` seconds.
  static SeatMotion stationary(double duration, double dt, Axis axis = Axis::vertical) {
    const auto n = static_cast<std::size_t>(std::llround(duration / dt)) + 1;
    return from_acceleration(axis, dt, std::vector<double>(n, 0.0));
  }

  std::size_t index(double t) const {
    if (acceleration.empty()) return 0;
    const auto i = static_cast<long long>(std::llround(t / dt));
    return static_cast<std::size_t>(std::clamp<long long>(i, 0, static_cast<long long>(acceleration.size()) - 1));
  }
  Vec3 direction() const { return Vec3::Unit(static_cast<int>(axis)); }
  Vec3 acceleration_at(double t) const {
    return acceleration.empty() ? Vec3::Zero() : Vec3(direction() * acceleration[index(t)]);
  }
  Vec3 displacement_at(double t) const {
    return position.empty() ? Vec3::Zero() : Vec3(direction() * position[index(t)]);
  }
};

/// Per-segment wrench accumulator. `torque` is about `point`.
struct ExternalForces {
  struct Wrench {
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();
    Vec3 point = Vec3::Zero();
    bool touched = false;
  };
  std::vector<Wrench> segments;

  ExternalForces() = default;
  explicit ExternalForces(std::size_t n) : segments(n) {}

  void reset(std::size_t n) { segments.assign(n, Wrench{}); }
  void reset() { reset(segments.size()); }

  void add_force(std::size_t segment, const Vec3& at, const Vec3& force) {
    auto& w = segments.at(segment);
    if (!w.touched) {
      w.point = at;
      w.touched = true;
    }
    w.force += force;
    w.torque += (at - w.point).cross(force);
  }

  /// Spatial force (moment about the world origin; force).
  Vec6 spatial(std::size_t segment) const {
    const auto& w = segments[segment];
    Vec6 f;
    f << w.torque + w.point.cross(w.force), w.force;
    return f;
  }

  Vec3 total_force() const {
    Vec3 f = Vec3::Zero();
    for (const auto& w : segments) f += w.force;
    return f;
  }

  bool finite() const {
    for (const auto& w : segments)
      if (!w.force.allFinite() || !w.torque.allFinite() || !w.point.allFinite()) return false;
    return true;
  }
};

/// Linearization of a point force used by the implicit step:
/// dF/dv = -damping, dF/dx = -stiffness at a body point (world frame).
struct PointImpedance {
  std::size_t segment = 0;
  Vec3 point = Vec3::Zero();
  Mat3 damping = Mat3::Zero();
  Mat3 stiffness = Mat3::Zero();
};

/// Joint-space mass matrix via composite rigid bodies.
inline MatX mass_matrix(const Multibody& mb, const Kinematics& kin) {
  const auto& bodies = mb.bodies();
  const std::size_t n = bodies.size();
  std::vector<Mat6> composite(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = kin.frames[i];
    composite[i] = spatial_inertia(bodies[i].mass, f.com, f.rotation * bodies[i].inertia * f.rotation.transpose());
  }
  for (std::size_t i = n; i-- > 1;) composite[bodies[i].parent] += composite[i];

  MatX m = MatX::Zero(mb.nv(), mb.nv());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = bodies[i];
    for (int k = 0; k < b.ndof; ++k) {
      const Vec6 force = composite[i] * kin.frames[i].subspace.col(k);
      const int row = b.v_index + k;
      for (int k2 = 0; k2 <= k; ++k2) {
        const double val = kin.frames[i].subspace.col(k2).dot(force);
        m(row, b.v_index + k2) = val;
        m(b.v_index + k2, row) = val;
      }
      for (int a = b.parent; a >= 0; a = bodies[a].parent) {
        for (int k2 = 0; k2 < bodies[a].ndof; ++k2) {
          const double val = kin.frames[a].subspace.col(k2).dot(force);
          m(row, bodies[a].v_index + k2) = val;
          m(bodies[a].v_index + k2, row) = val;
        }
      }
    }
  }
  return m;
}

/// h(q, qd) - tau_ext in origin coordinates: velocity-product, gravity and
/// external generalized forces (recursive Newton-Euler with zero joint
/// acceleration).
inline VecX bias_forces(const Multibody& mb, const SystemState& state, const Kinematics& kin, const Vec3& gravity,
                        const ExternalForces* ext) {
  const auto& bodies = mb.bodies();
  const std::size_t n = bodies.size();
  std::vector<Vec6> accel(n);
  std::vector<Vec6> force(n);
  Vec6 base;
  base << Vec3::Zero(), -gravity;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = bodies[i];
    const auto& f = kin.frames[i];
    Vec6 c = Vec6::Zero();
    if (b.kind == Multibody::Kind::free_root) {
      const Vec3 w = state.v.segment<3>(b.v_index);
      c.tail<3>() = kin.root_origin_velocity.cross(w);
    } else if (b.parent >= 0) {
      c = motion_cross(f.velocity, f.joint_velocity);
    }
    accel[i] = (b.parent >= 0 ? accel[b.parent] : base) + c;
    const Mat6 inertia = spatial_inertia(b.mass, f.com, f.rotation * b.inertia * f.rotation.transpose());
    force[i] = inertia * accel[i] + force_cross(f.velocity, inertia * f.velocity);
    if (ext && !ext->segments.empty()) force[i] -= ext->spatial(b.segment);
  }
  VecX h = VecX::Zero(mb.nv());
  for (std::size_t i = n; i-- > 0;) {
    const auto& b = bodies[i];
    for (int k = 0; k < b.ndof; ++k) h[b.v_index + k] = kin.frames[i].subspace.col(k).dot(force[i]);
    if (b.parent >= 0) force[b.parent] += force[i];
  }
  return h;
}

/// Deviation of a spherical joint from rest as a rotation vector.
inline Vec3 spherical_deviation(const Multibody::Body& b, const VecX& q) {
  const Quat rel = Multibody::get_quat(q, b.q_index).normalized();
  return quat_log(quat_exp(b.rest).conjugate() * rel);
}

/// Passive postural stabilization torques (spring-damper per joint DOF).
inline VecX joint_torques(const Multibody& mb, const SystemState& state) {
  VecX tau = VecX::Zero(mb.nv());
  for (const auto& b : mb.bodies()) {
    if (b.kind == Multibody::Kind::spherical) {
      const Vec3 theta = spherical_deviation(b, state.q);
      const Vec3 w = state.v.segment<3>(b.v_index);
      const Vec3 spring = so3_right_jacobian_inv(theta).transpose() * b.stiffness.cwiseProduct(theta);
      tau.segment<3>(b.v_index) = -spring - b.damping.cwiseProduct(w);
    } else if (b.kind == Multibody::Kind::revolute) {
      tau[b.v_index] = -b.stiffness.x() * (state.q[b.q_index] - b.rest.x()) - b.damping.x() * state.v[b.v_index];
    }
  }
  return tau;
}

inline double joint_spring_energy(const Multibody& mb, const SystemState& state) {
  double e = 0.0;
  for (const auto& b : mb.bodies()) {
    if (b.kind == Multibody::Kind::spherical) {
      const Vec3 theta = spherical_deviation(b, state.q);
      e += 0.5 * theta.dot(b.stiffness.cwiseProduct(theta));
    } else if (b.kind == Multibody::Kind::revolute) {
      const double d = state.q[b.q_index] - b.rest.x();
      e += 0.5 * b.stiffness.x() * d * d;
    }
  }
  return e;
}

inline double kinetic_energy(const Multibody& mb, const SystemState& state) {
  const auto kin = forward_kinematics(mb, state);
  const VecX v = origin_velocities(mb, state, kin);
  return 0.5 * v.dot(mass_matrix(mb, kin) * v);
}

inline double gravitational_energy(const Multibody& mb, const SystemState& state, const Vec3& gravity = kGravity) {
  const auto kin = forward_kinematics(mb, state);
  double e = 0.0;
  for (std::size_t i = 0; i < mb.bodies().size(); ++i) e -= mb.bodies()[i].mass * gravity.dot(kin.frames[i].com);
  return e;
}

inline VecX solve_spd(const MatX& m, const VecX& rhs, const char* what) {
  Eigen::LDLT<MatX> ldlt(m);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
    Eigen::SelfAdjointEigenSolver<MatX> eig(m, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    throw NumericalError(std::string(what) + " is not positive definite (eigenvalues " + std::to_string(lo) +
                         " .. " + std::to_string(hi) + ", condition number " +
                         std::to_string(lo > 0.0 ? hi / lo : INFINITY) + ")");
  }
  return ldlt.solve(rhs);
}

inline bool has_free_root(const Multibody& mb) {
  return !mb.bodies().empty() && mb.bodies()[0].kind == Multibody::Kind::free_root;
}

/// Generalized accelerations (state coordinates) for the given state and
/// external loads. Joint stabilization torques are included.
inline VecX forward_dynamics(const Multibody& mb, const SystemState& state, const ExternalForces& ext,
                             const Vec3& seat_acceleration) {
  if (!ext.finite()) throw ValidationError("ext", "external forces must be finite");
  const auto kin = forward_kinematics(mb, state);
  const MatX m = mass_matrix(mb, kin);
  const Vec3 g_eff = kGravity - seat_acceleration;
  const VecX rhs = joint_torques(mb, state) - bias_forces(mb, state, kin, g_eff, &ext);
  VecX acc = solve_spd(m, rhs, "mass matrix");
  if (has_free_root(mb)) acc.segment<3>(mb.bodies()[0].v_index + 3) = g_eff + ext.total_force() / kin.total_mass;
  return acc;
}

inline VecX forward_dynamics(const Multibody& mb, const SystemState& state, const ExternalForces& ext,
                             const SeatMotion& seat) {
  return forward_dynamics(mb, state, ext, seat.acceleration_at(state.t));
}

/// q <- q (+) dt * v on the configuration manifold, v in origin coordinates;
/// quaternions renormalized.
inline VecX integrate_configuration(const Multibody& mb, const VecX& q, const VecX& v, double dt) {
  VecX out = q;
  for (const auto& b : mb.bodies()) {
    switch (b.kind) {
      case Multibody::Kind::free_root: {
        out.segment<3>(b.q_index) += dt * v.segment<3>(b.v_index + 3);
        const Quat r = Multibody::get_quat(q, b.q_index + 3);
        Multibody::set_quat(out, b.q_index + 3, (quat_exp(dt * v.segment<3>(b.v_index)) * r).normalized());
        break;
      }
      case Multibody::Kind::spherical: {
        const Quat r = Multibody::get_quat(q, b.q_index);
        Multibody::set_quat(out, b.q_index, (r * quat_exp(dt * v.segment<3>(b.v_index))).normalized());
        break;
      }
      case Multibody::Kind::revolute: out[b.q_index] += dt * v[b.v_index]; break;
      case Multibody::Kind::fixed_root: break;
    }
  }
  return out;
}

inline void check_finite(const Multibody& mb, const SystemState& s) {
  for (int i = 0; i < s.q.size(); ++i)
    if (!std::isfinite(s.q[i])) throw DivergenceError(s.t, mb.coordinate_name(i));
  for (int i = 0; i < s.v.size(); ++i)
    if (!std::isfinite(s.v[i])) throw DivergenceError(s.t, mb.velocity_name(i));
}

/// One semi-implicit Euler step. Joint spring-dampers and the supplied point
/// impedances are treated linearly implicitly:
///   (M + dt (C + J'DJ) + dt^2 (K + J'KJ)) v+ = M v + dt (tau - h) + dt (C + J'DJ) v
///   q+ = q (+) dt v+
inline SystemState step(const Multibody& mb, const SystemState& state, const ExternalForces& ext,
                        const std::vector<PointImpedance>& impedances, const Vec3& seat_acceleration, double dt) {
  if (!(dt > 0.0)) throw ValidationError("dt", "must be > 0");
  const auto kin = forward_kinematics(mb, state);
  const VecX v = origin_velocities(mb, state, kin);
  const Vec3 g_eff = kGravity - seat_acceleration;
  const MatX m = mass_matrix(mb, kin);
  const VecX h = bias_forces(mb, state, kin, g_eff, &ext);
  MatX a = m;
  VecX rhs = m * v + dt * (joint_torques(mb, state) - h);
  for (const auto& b : mb.bodies()) {
    for (int k = 0; k < b.ndof && b.kind != Multibody::Kind::free_root; ++k) {
      const int i = b.v_index + k;
      a(i, i) += dt * b.damping[k] + dt * dt * b.stiffness[k];
      rhs[i] += dt * b.damping[k] * v[i];
    }
  }
  for (const auto& imp : impedances) {
    const int body = mb.body_of_segment(imp.segment);
    const auto jac = point_jacobian_chain(mb, kin, body, imp.point);
    const auto& dofs = mb.chain_dofs(body);
    const MatX jd = jac.transpose() * imp.damping * jac;
    const MatX jk = jac.transpose() * imp.stiffness * jac;
    for (std::size_t r = 0; r < dofs.size(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dofs.size(); ++c) {
        a(dofs[r], dofs[c]) += dt * jd(r, c) + dt * dt * jk(r, c);
        acc += jd(r, c) * v[dofs[c]];
      }
      rhs[dofs[r]] += dt * acc;
    }
  }
  const VecX v_next = solve_spd(a, rhs, "step matrix");
  SystemState next;
  next.v = v_next;
  next.q = integrate_configuration(mb, state.q, v_next, dt);
  if (has_free_root(mb)) {
    // Centre-of-mass velocity from the momentum rows with the
    // velocity-product part of h removed; those terms only redistribute
    // momentum among the segments.
    const int t = mb.bodies()[0].v_index + 3;
    const double total = kin.total_mass;
    const Vec3 coupled = m.middleRows<3>(t) * v_next / total;
    const Vec3 velocity_terms = (h.segment<3>(t) + total * g_eff + ext.total_force()) / total;
    next.v.segment<3>(t) = coupled + dt * velocity_terms;
  }
  next.t = state.t + dt;
  check_finite(mb, next);
  return next;
}

inline SystemState step(const Multibody& mb, const SystemState& state, const ExternalForces& ext,
                        const SeatMotion& seat, double dt) {
  return step(mb, state, ext, {}, seat.acceleration_at(state.t), dt);
}

/// Classical RK4 on (q, v); `loads(state)` is re-evaluated at each stage.
/// Explicit: intended for convergence studies with smooth, non-stiff loads.
inline SystemState step_rk4(const Multibody& mb, const SystemState& state,
                            const std::function<ExternalForces(const SystemState&)>& loads, const SeatMotion& seat,
                            double dt) {
  if (!(dt > 0.0)) throw ValidationError("dt", "must be > 0");
  const Vec3 a_seat = seat.acceleration_at(state.t);
  // Configuration rate (origin coordinates) and acceleration at a stage.
  auto deriv = [&](const SystemState& s) {
    return std::make_pair(origin_velocities(mb, s, forward_kinematics(mb, s)),
                          forward_dynamics(mb, s, loads(s), a_seat));
  };
  auto advance = [&](const std::pair<VecX, VecX>& d, double h) {
    SystemState s;
    s.v = state.v + h * d.second;
    s.q = integrate_configuration(mb, state.q, d.first, h);
    s.t = state.t + h;
    return s;
  };
  const auto k1 = deriv(state);
  const auto k2 = deriv(advance(k1, 0.5 * dt));
  const auto k3 = deriv(advance(k2, 0.5 * dt));
  const auto k4 = deriv(advance(k3, dt));
  SystemState next;
  next.v = state.v + (dt / 6.0) * (k1.second + 2.0 * k2.second + 2.0 * k3.second + k4.second);
  next.q = integrate_configuration(mb, state.q, (k1.first + 2.0 * k2.first + 2.0 * k3.first + k4.first) / 6.0, dt);
  next.t = state.t + dt;
  check_finite(mb, next);
  return next;
}

}  // namespace seatsim
