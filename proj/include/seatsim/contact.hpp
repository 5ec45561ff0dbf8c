#pragma once

// Rigid seat surfaces and the body-side contact layer. All geometry lives in
// the seat frame, which is the simulation's reference frame, so surfaces are
// stationary and relative velocities are body velocities.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "seatsim/body_model.hpp"
#include "seatsim/dynamics.hpp"
#include "seatsim/errors.hpp"
#include "seatsim/multibody.hpp"

namespace seatsim {

/// Rectangular plane patch. `tangent` is the in-plane axis of extent.x().
struct PlaneSurface {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 tangent = Vec3::UnitX();
  Eigen::Vector2d extent{1.0, 1.0};

  Vec3 bitangent() const { return normal.cross(tangent); }

  void validate(const std::string& field) const {
    if (std::abs(normal.norm() - 1.0) > 1e-12) throw ValidationError(field + ".normal", "must be a unit vector");
    if (std::abs(tangent.dot(normal)) > 1e-12 || std::abs(tangent.norm() - 1.0) > 1e-12)
      throw ValidationError(field + ".tangent", "must be a unit vector in the plane");
    if (!(extent.minCoeff() > 0.0)) throw ValidationError(field + ".extent", "must be > 0");
  }

  double signed_distance(const Vec3& x) const { return (x - point).dot(normal); }
  bool covers(const Vec3& x) const {
    const Vec3 d = x - point;
    return std::abs(d.dot(tangent)) <= extent.x() && std::abs(d.dot(bitangent())) <= extent.y();
  }
};

/// F = k_n d^e + c_n d^e dd (penetration-limited damping) or
/// F = k_n d^e + c_n dd, clamped at zero either way.
struct NormalContactLaw {
  double k_n = 2.0e5;
  double e = 1.5;
  double c_n = 6.0e5;
  bool penetration_damping = true;

  bool operator==(const NormalContactLaw&) const = default;

  void validate(const std::string& field = "contact") const {
    if (!(k_n > 0.0)) throw ValidationError(field + ".k_n", "must be > 0");
    if (!(e >= 1.0)) throw ValidationError(field + ".e", "must be >= 1");
    if (!(c_n >= 0.0)) throw ValidationError(field + ".c_n", "must be >= 0");
  }

  double force(double depth, double rate) const {
    if (depth <= 0.0) return 0.0;
    const double de = std::pow(depth, e);
    return std::max(0.0, k_n * de + c_n * (penetration_damping ? de : 1.0) * rate);
  }
  /// dF/d(depth), dF/d(rate); zero where the force is clamped.
  double stiffness(double depth, double rate) const {
    if (force(depth, rate) <= 0.0) return 0.0;
    const double slope = e * std::pow(depth, e - 1.0);
    return std::max(0.0, k_n * slope + (penetration_damping ? c_n * slope * rate : 0.0));
  }
  double damping(double depth, double rate) const {
    if (force(depth, rate) <= 0.0) return 0.0;
    return c_n * (penetration_damping ? std::pow(depth, e) : 1.0);
  }
};

struct FrictionLaw {
  double mu = 1.0;
  double v_reg = 0.01;

  void validate(const std::string& field = "contact") const {
    if (!(mu >= 0.0)) throw ValidationError(field + ".mu", "must be >= 0");
    if (!(v_reg > 0.0)) throw ValidationError(field + ".v_reg", "must be > 0");
  }
};

/// Regularized Coulomb friction: |F_t| = mu F_n tanh(|v_t| / v_reg), opposing v_t.
inline Vec3 friction_force(double normal_force, const Vec3& v_t, const FrictionLaw& law) {
  const double speed = v_t.norm();
  if (normal_force <= 0.0 || law.mu == 0.0 || speed == 0.0) return Vec3::Zero();
  const double cap = law.mu * normal_force;
  Vec3 f = -(cap * std::tanh(speed / law.v_reg) / speed) * v_t;
  // Rounding can leave |f| an ulp above the cone at saturation; pull it inside.
  while (f.norm() > cap) f *= 1.0 - std::numeric_limits<double>::epsilon();
  return f;
}

/// -dF_t/dv_t for the tangent plane with normal `n` (symmetric, PSD).
inline Mat3 friction_damping(double normal_force, const Vec3& v_t, const Vec3& n, const FrictionLaw& law) {
  const Mat3 tangent = Mat3::Identity() - n * n.transpose();
  if (normal_force <= 0.0 || law.mu == 0.0) return Mat3::Zero();
  const double scale = law.mu * normal_force;
  const double speed = v_t.norm();
  const double s = speed / law.v_reg;
  if (s < 1e-8) return (scale / law.v_reg) * tangent;
  const Vec3 u = v_t / speed;
  const double sech = 1.0 / std::cosh(s);
  const double along = scale * sech * sech / law.v_reg;
  const double across = scale * std::tanh(s) / speed;
  return along * u * u.transpose() + across * (tangent - u * u.transpose());
}

struct WorldEllipsoid {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 semi_axes = Vec3::Ones();
};

/// Surface point farthest along `direction`.
inline Vec3 ellipsoid_support(const WorldEllipsoid& e, const Vec3& direction) {
  const Vec3 local = e.rotation.transpose() * direction;
  const Vec3 scaled = e.semi_axes.cwiseProduct(local);
  const double norm = scaled.norm();
  if (norm == 0.0) return e.center;
  return e.center + e.rotation * (e.semi_axes.cwiseProduct(scaled) / norm);
}

inline WorldEllipsoid world_ellipsoid(const Multibody& mb, const Kinematics& kin, std::size_t segment) {
  const auto& ell = mb.model().segments[segment].contact_ellipsoid;
  const auto& f = kin.frames[mb.body_of_segment(segment)];
  return {f.origin + f.rotation * ell.center, f.rotation * ell.orientation.toRotationMatrix(), ell.semi_axes};
}

struct NormalContact {
  bool active = false;
  Vec3 point = Vec3::Zero();   // deepest point of the ellipsoid
  Vec3 normal = Vec3::UnitZ();  // surface normal, pushes the body
  double depth = 0.0;
  double depth_rate = 0.0;
  double force = 0.0;
  Vec3 velocity = Vec3::Zero();  // body material velocity at `point`

  Vec3 force_vector() const { return force * normal; }
};

/// Penalty contact between an ellipsoid moving with (velocity at centre,
/// angular velocity) and a stationary plane patch.
inline NormalContact ellipsoid_plane_contact(const WorldEllipsoid& e, const Vec3& velocity,
                                             const Vec3& angular_velocity, const PlaneSurface& surface,
                                             const NormalContactLaw& law) {
  NormalContact c;
  c.normal = surface.normal;
  c.point = ellipsoid_support(e, -surface.normal);
  const double distance = surface.signed_distance(c.point);
  if (distance >= 0.0 || !surface.covers(c.point)) return c;
  c.depth = -distance;
  c.velocity = velocity + angular_velocity.cross(c.point - e.center);
  c.depth_rate = -c.velocity.dot(surface.normal);
  c.force = law.force(c.depth, c.depth_rate);
  c.active = true;
  return c;
}

/// In-plane spring-damper between a body point and a seat anchor.
struct PointRestraint {
  std::string segment;
  Vec3 local_point = Vec3::Zero();
  Vec3 anchor = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double k_t = 1.0e4;
  double c_t = 200.0;

  Mat3 in_plane() const { return Mat3::Identity() - normal * normal.transpose(); }
};

inline Vec3 point_restraint_force(const PointRestraint& r, const Vec3& x, const Vec3& v,
                                  const Vec3& anchor, const Vec3& anchor_velocity = Vec3::Zero()) {
  const Vec3 d = x - anchor;
  const Vec3 dv = v - anchor_velocity;
  const Vec3 d_par = d - d.dot(r.normal) * r.normal;
  const Vec3 v_par = dv - dv.dot(r.normal) * r.normal;
  Vec3 f = -(r.k_t * d_par + r.c_t * v_par);
  return f - f.dot(r.normal) * r.normal;
}

/// Lateral-only anti-drift spring.
struct WeakSpring {
  std::string segment;
  Vec3 local_point = Vec3::Zero();
  Vec3 anchor = Vec3::Zero();
  Vec3 axis = Vec3::UnitY();
  double k_w = 100.0;
};

inline Vec3 weak_spring_force(const WeakSpring& w, const Vec3& x) { return -w.k_w * (x - w.anchor).dot(w.axis) * w.axis; }

enum class ContactVariant { foam_fe, mb_friction, mb_shear };

inline const char* variant_name(ContactVariant v) {
  switch (v) {
    case ContactVariant::foam_fe: return "FoamFE";
    case ContactVariant::mb_friction: return "MbFriction";
    case ContactVariant::mb_shear: return "MbShear";
  }
  return "?";
}

inline ContactVariant parse_variant(const std::string& s) {
  for (auto v : {ContactVariant::foam_fe, ContactVariant::mb_friction, ContactVariant::mb_shear})
    if (s == variant_name(v)) return v;
  throw ConfigError("contact.variant", "unknown variant '" + s + "' (expected FoamFE, MbFriction or MbShear)");
}

struct RestraintSpec {
  std::string segment;
  double k_t = 1.0e4;
  double c_t = 200.0;

  bool operator==(const RestraintSpec&) const = default;
};

struct WeakSpringSpec {
  std::string segment;
  double k_w = 100.0;

  bool operator==(const WeakSpringSpec&) const = default;
};

inline constexpr double kDefaultRestraintStiffness = 1.0e4;

struct ContactConfig {
  ContactVariant variant = ContactVariant::mb_shear;
  NormalContactLaw normal;
  double mu = 1.0;  // rigid surfaces; the foam has its own coefficient
  double v_reg = 0.01;
  double pan_tilt_deg = 8.0;
  double backrest_recline_deg = 0.0;
  std::vector<std::string> pan_segments{"pelvis", "upper_leg_l", "upper_leg_r"};
  std::vector<std::string> backrest_segments{"pelvis", "lumbar", "thoracic"};
  std::vector<RestraintSpec> restraints{
      {"pelvis"}, {"upper_leg_l"}, {"upper_leg_r"}, {"lumbar"}, {"thoracic"}};
  std::vector<WeakSpringSpec> weak_springs{{"pelvis"}, {"upper_leg_l"}, {"upper_leg_r"}};

  bool operator==(const ContactConfig&) const = default;

  FrictionLaw rigid_friction() const {
    return {variant == ContactVariant::mb_shear ? 0.0 : mu, v_reg};
  }

  void validate(const BodyModel& body) const {
    normal.validate("contact");
    FrictionLaw{mu, v_reg}.validate("contact");
    if (!(std::abs(pan_tilt_deg) < 45.0)) throw ValidationError("contact.pan_tilt_deg", "must be within (-45, 45)");
    if (!(std::abs(backrest_recline_deg) < 45.0))
      throw ValidationError("contact.backrest_recline_deg", "must be within (-45, 45)");
    auto known = [&](const std::string& s, const std::string& field) {
      if (!body.segment_index(s)) throw ValidationError(field, "unknown segment '" + s + "'");
    };
    for (const auto& s : pan_segments) known(s, "contact.pan_segments");
    for (const auto& s : backrest_segments) known(s, "contact.backrest_segments");
    for (const auto& r : restraints) {
      known(r.segment, "contact.restraints.segment");
      if (!(r.k_t >= 0.0)) throw ValidationError("contact.restraints.k_t", "must be >= 0");
      if (!(r.c_t >= 0.0)) throw ValidationError("contact.restraints.c_t", "must be >= 0");
      if (std::find(pan_segments.begin(), pan_segments.end(), r.segment) == pan_segments.end() &&
          std::find(backrest_segments.begin(), backrest_segments.end(), r.segment) == backrest_segments.end())
        throw ValidationError("contact.restraints.segment", "'" + r.segment + "' touches no seat surface");
    }
    for (const auto& w : weak_springs) {
      known(w.segment, "contact.weak_springs.segment");
      if (!(w.k_w >= 0.0)) throw ValidationError("contact.weak_springs.k_w", "must be >= 0");
      if (w.k_w > 0.1 * kDefaultRestraintStiffness)
        throw ValidationError("contact.weak_springs.k_w", "must be <= 0.1 x default restraint stiffness (" +
                                                             std::to_string(static_cast<int>(0.1 * kDefaultRestraintStiffness)) + " N/m)");
    }
  }
};

struct SeatGeometry {
  PlaneSurface pan;
  PlaneSurface backrest;
};

/// Pan tilted front-up and backrest reclined about the lateral axis, each
/// placed tangent to the lowest / rearmost of its body ellipsoids in `state`.
inline SeatGeometry default_seat_geometry(const Multibody& mb, const SystemState& state, const ContactConfig& cfg) {
  const auto kin = forward_kinematics(mb, state);
  const auto& body = mb.model();
  const double tilt = cfg.pan_tilt_deg * M_PI / 180.0;
  const double recline = cfg.backrest_recline_deg * M_PI / 180.0;
  SeatGeometry g;
  g.pan.normal = Vec3(-std::sin(tilt), 0.0, std::cos(tilt));
  g.pan.tangent = Vec3(std::cos(tilt), 0.0, std::sin(tilt));
  g.backrest.normal = Vec3(std::cos(recline), 0.0, std::sin(recline));
  g.backrest.tangent = Vec3::UnitY();
  auto place = [&](PlaneSurface& s, const std::vector<std::string>& segments) {
    double lowest = INFINITY;
    Vec3 centroid = Vec3::Zero();
    for (const auto& name : segments) {
      const Vec3 x = ellipsoid_support(world_ellipsoid(mb, kin, *body.segment_index(name)), -s.normal);
      centroid += x / static_cast<double>(segments.size());
      if (x.dot(s.normal) < lowest) lowest = x.dot(s.normal);
    }
    s.point = centroid - (centroid.dot(s.normal) - lowest) * s.normal;
  };
  place(g.pan, cfg.pan_segments);
  place(g.backrest, cfg.backrest_segments);
  g.pan.extent = {0.6, 0.4};
  g.backrest.extent = {0.4, 0.6};
  return g;
}

/// One evaluated surface contact, kept for audits.
struct ContactRecord {
  std::string surface;
  std::size_t segment = 0;
  NormalContact normal;
  Vec3 friction = Vec3::Zero();
  double mu = 0.0;
};

struct ContactOutput {
  ExternalForces ext;
  std::vector<PointImpedance> impedances;
  std::vector<ContactRecord> contacts;
  std::vector<Vec3> restraint_forces;
  std::vector<Vec3> weak_spring_forces;
  Vec3 foam_force = Vec3::Zero();

  Vec3 total_force() const { return ext.total_force(); }
  Vec3 friction_on(const std::string& surface) const {
    Vec3 f = Vec3::Zero();
    for (const auto& c : contacts)
      if (c.surface == surface) f += c.friction;
    return f;
  }
  Vec3 restraint_sum() const {
    Vec3 f = Vec3::Zero();
    for (const auto& r : restraint_forces) f += r;
    return f;
  }
  /// Largest |F_t| / (mu F_n) over the frictional contacts (0 if none).
  double friction_cone_ratio() const {
    double worst = 0.0;
    for (const auto& c : contacts)
      if (c.mu > 0.0 && c.normal.force > 0.0)
        worst = std::max(worst, c.friction.norm() / (c.mu * c.normal.force));
    return worst;
  }
};

/// Backrest replacement for the FoamFE variant.
class DeformableBackrest {
 public:
  virtual ~DeformableBackrest() = default;
  virtual void add_contact(const Multibody& mb, const Kinematics& kin, ContactOutput& out) = 0;
};

/// Restraint and weak-spring attachments. Restraint body points are fixed at
/// attach time; until `anchored` their anchors track the body points, so
/// only the in-plane damping acts. Weak springs are anchored at attach time.
struct ContactState {
  bool anchored = false;
  std::vector<PointRestraint> restraints;
  std::vector<WeakSpring> weak_springs;
};

inline ContactState attach_contacts(const ContactConfig& cfg, const SeatGeometry& geometry, const Multibody& mb,
                                    const Kinematics& kin) {
  const auto& body = mb.model();
  ContactState state;
  auto in = [](const std::vector<std::string>& list, const std::string& s) {
    return std::find(list.begin(), list.end(), s) != list.end();
  };
  for (const auto& spec : cfg.restraints) {
    const std::size_t seg = *body.segment_index(spec.segment);
    const PlaneSurface& surface = in(cfg.pan_segments, spec.segment) ? geometry.pan : geometry.backrest;
    const auto& f = kin.frames[mb.body_of_segment(seg)];
    const Vec3 x = ellipsoid_support(world_ellipsoid(mb, kin, seg), -surface.normal);
    PointRestraint r;
    r.segment = spec.segment;
    r.local_point = f.rotation.transpose() * (x - f.origin);
    r.anchor = x;
    r.normal = surface.normal;
    r.k_t = spec.k_t;
    r.c_t = spec.c_t;
    state.restraints.push_back(r);
  }
  for (const auto& spec : cfg.weak_springs) {
    const std::size_t seg = *body.segment_index(spec.segment);
    const auto& f = kin.frames[mb.body_of_segment(seg)];
    WeakSpring w;
    w.segment = spec.segment;
    w.local_point = body.segments[seg].contact_ellipsoid.center;
    w.anchor = f.origin + f.rotation * w.local_point;
    w.k_w = spec.k_w;
    state.weak_springs.push_back(w);
  }
  return state;
}

/// Fixes restraint anchors at the body points' current world positions.
inline void anchor_restraints(ContactState& state, const Multibody& mb, const Kinematics& kin) {
  for (auto& r : state.restraints)
    r.anchor = kin.point(mb.body_of_segment(*mb.model().segment_index(r.segment)), r.local_point);
  state.anchored = true;
}

/// Contact loads on the body for one variant:
///   MbFriction: pan + backrest normal force and friction, weak lateral springs.
///   MbShear:    frictionless pan + backrest, in-plane point restraints.
///   FoamFE:     pan as MbFriction; the backrest is delegated to `foam`.
inline ContactOutput assemble_contact_forces(const ContactConfig& cfg, const SeatGeometry& geometry,
                                             const Multibody& mb, const Kinematics& kin, const ContactState& state,
                                             DeformableBackrest* foam = nullptr) {
  const auto& body = mb.model();
  ContactOutput out;
  out.ext.reset(body.segments.size());
  const FrictionLaw friction = cfg.rigid_friction();

  auto add_surface = [&](const std::string& name, const PlaneSurface& surface, const std::vector<std::string>& segs) {
    for (const auto& s : segs) {
      const std::size_t seg = *body.segment_index(s);
      const int b = mb.body_of_segment(seg);
      const WorldEllipsoid e = world_ellipsoid(mb, kin, seg);
      const NormalContact nc = ellipsoid_plane_contact(e, kin.point_velocity(b, e.center), kin.angular_velocity(b),
                                                       surface, cfg.normal);
      if (!nc.active) continue;
      const Vec3 n = surface.normal;
      const Vec3 v_t = nc.velocity - nc.velocity.dot(n) * n;
      ContactRecord rec{name, seg, nc, friction_force(nc.force, v_t, friction), friction.mu};
      out.ext.add_force(seg, nc.point, nc.force_vector() + rec.friction);
      PointImpedance imp;
      imp.segment = seg;
      imp.point = nc.point;
      imp.stiffness = cfg.normal.stiffness(nc.depth, nc.depth_rate) * n * n.transpose();
      imp.damping = cfg.normal.damping(nc.depth, nc.depth_rate) * n * n.transpose() +
                    friction_damping(nc.force, v_t, n, friction);
      out.impedances.push_back(imp);
      out.contacts.push_back(rec);
    }
  };

  add_surface("pan", geometry.pan, cfg.pan_segments);
  if (cfg.variant == ContactVariant::foam_fe) {
    if (!foam) throw ConfigError("contact.variant", "FoamFE requires a foam backrest");
    const Vec3 before = out.ext.total_force();
    foam->add_contact(mb, kin, out);
    out.foam_force = out.ext.total_force() - before;
  } else {
    add_surface("backrest", geometry.backrest, cfg.backrest_segments);
  }

  if (cfg.variant == ContactVariant::mb_shear) {
    for (const auto& r : state.restraints) {
      const std::size_t seg = *body.segment_index(r.segment);
      const int b = mb.body_of_segment(seg);
      const Vec3 x = kin.point(b, r.local_point);
      const Vec3 f = point_restraint_force(r, x, kin.point_velocity(b, x), state.anchored ? r.anchor : x);
      const double k = state.anchored ? r.k_t : 0.0;
      out.ext.add_force(seg, x, f);
      out.impedances.push_back({seg, x, r.c_t * r.in_plane(), k * r.in_plane()});
      out.restraint_forces.push_back(f);
    }
  } else {
    for (const auto& w : state.weak_springs) {
      const std::size_t seg = *body.segment_index(w.segment);
      const int b = mb.body_of_segment(seg);
      const Vec3 x = kin.point(b, w.local_point);
      const Vec3 f = weak_spring_force(w, x);
      out.ext.add_force(seg, x, f);
      out.impedances.push_back({seg, x, Mat3::Zero(), w.k_w * w.axis * w.axis.transpose()});
      out.weak_spring_forces.push_back(f);
    }
  }
  return out;
}

}  // namespace seatsim
