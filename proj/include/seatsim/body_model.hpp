#pragma once

// Occupant description: rigid segments, joints with passive postural
// stabilization gains, and named output markers.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "seatsim/errors.hpp"
#include "seatsim/rotation.hpp"

namespace seatsim {

struct Ellipsoid {
  Vec3 semi_axes = Vec3::Constant(0.05);
  Vec3 center = Vec3::Zero();            // segment frame
  Quat orientation = Quat::Identity();   // ellipsoid axes in segment frame
};

struct SegmentSpec {
  std::string name;
  double mass = 0.0;
  Vec3 principal_inertia = Vec3::Zero();  // about the COM, kg m^2
  Quat principal_axes = Quat::Identity(); // principal frame in segment frame
  Vec3 com_offset = Vec3::Zero();         // from the proximal joint
  Ellipsoid contact_ellipsoid;

  /// Inertia tensor about the COM expressed in the segment frame.
  Mat3 inertia_tensor() const {
    const Mat3 r = principal_axes.toRotationMatrix();
    return r * principal_inertia.asDiagonal() * r.transpose();
  }
};

enum class JointType { spherical, revolute };

struct JointSpec {
  std::string name;
  std::string parent;
  std::string child;
  JointType type = JointType::spherical;
  Vec3 axis = Vec3::UnitY();      // revolute only, child frame
  Vec3 origin = Vec3::Zero();     // joint centre in the parent frame
  Vec3 rest_angles = Vec3::Zero();  // rotation vector (spherical) or [angle,0,0]
  Vec3 stiffness = Vec3::Zero();  // N m/rad per DOF; revolute uses [0]
  Vec3 damping = Vec3::Zero();    // N m s/rad per DOF
  std::string group;              // calibration group

  int dof() const { return type == JointType::spherical ? 3 : 1; }
};

struct Marker {
  std::string name;
  std::string segment;
  Vec3 local = Vec3::Zero();
};

enum class RootJoint { free, fixed };

/// A tree of rigid segments. The occupant model is one instance; tests build
/// smaller trees (pendulums, single bodies) with the same type.
struct BodyModel {
  std::vector<SegmentSpec> segments;
  std::vector<JointSpec> joints;
  std::vector<Marker> markers;
  std::string root = "pelvis";
  RootJoint root_joint = RootJoint::free;
  Vec3 root_position = Vec3::Zero();  // pose of the root at the zero configuration
  Quat root_orientation = Quat::Identity();

  std::optional<std::size_t> segment_index(const std::string& name) const {
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (segments[i].name == name) return i;
    return std::nullopt;
  }
  const Marker& marker(const std::string& name) const {
    for (const auto& m : markers)
      if (m.name == name) return m;
    throw LookupError("unknown marker '" + name + "'");
  }
  double total_mass() const {
    double m = 0.0;
    for (const auto& s : segments) m += s.mass;
    return m;
  }
};

/// Checks per-segment, per-joint and tree invariants that apply to any model.
inline void validate_tree(const BodyModel& model) {
  if (model.segments.empty()) throw ValidationError("body.segments", "no segments");
  std::set<std::string> names;
  for (std::size_t i = 0; i < model.segments.size(); ++i) {
    const auto& s = model.segments[i];
    const std::string f = "body.segments[" + std::to_string(i) + "]";
    if (!names.insert(s.name).second) throw ValidationError(f + ".name", "duplicate segment '" + s.name + "'");
    if (!(s.mass > 0.0) || !std::isfinite(s.mass)) throw ValidationError(f + ".mass", "must be > 0");
    const Vec3& in = s.principal_inertia;
    if (!(in.minCoeff() > 0.0)) throw ValidationError(f + ".inertia", "principal moments must be > 0");
    const double slack = 1e-12 * in.sum();
    if (in.x() > in.y() + in.z() + slack || in.y() > in.x() + in.z() + slack || in.z() > in.x() + in.y() + slack)
      throw ValidationError(f + ".inertia", "principal moments violate the triangle inequality");
    if (!(s.contact_ellipsoid.semi_axes.minCoeff() > 0.0))
      throw ValidationError(f + ".ellipsoid", "semi-axes must be > 0");
  }
  if (!model.segment_index(model.root)) throw ValidationError("body.root", "root segment '" + model.root + "' missing");

  std::map<std::string, std::string> parent_of;
  for (std::size_t j = 0; j < model.joints.size(); ++j) {
    const auto& jt = model.joints[j];
    const std::string f = "body.joints[" + std::to_string(j) + "]";
    if (!model.segment_index(jt.parent)) throw ValidationError(f + ".parent", "unknown segment '" + jt.parent + "'");
    if (!model.segment_index(jt.child)) throw ValidationError(f + ".child", "unknown segment '" + jt.child + "'");
    if (jt.child == model.root) throw ValidationError(f + ".child", "root segment cannot be a joint child");
    if (parent_of.count(jt.child)) throw ValidationError(f + ".child", "segment '" + jt.child + "' has two parents");
    parent_of[jt.child] = jt.parent;
    if (jt.stiffness.minCoeff() < 0.0) throw ValidationError(f + ".stiffness", "must be >= 0");
    if (jt.damping.minCoeff() < 0.0) throw ValidationError(f + ".damping", "must be >= 0");
    if (jt.type == JointType::revolute && std::abs(jt.axis.norm() - 1.0) > 1e-9)
      throw ValidationError(f + ".axis", "revolute axis must be a unit vector");
  }
  // Every segment must reach the root by following parents, without cycles.
  for (const auto& s : model.segments) {
    std::string cur = s.name;
    std::size_t hops = 0;
    while (cur != model.root) {
      auto it = parent_of.find(cur);
      if (it == parent_of.end())
        throw ValidationError("body.joints", "segment '" + s.name + "' is not connected to the root");
      cur = it->second;
      if (++hops > model.segments.size()) throw ValidationError("body.joints", "joint graph contains a cycle");
    }
  }
  for (std::size_t k = 0; k < model.markers.size(); ++k)
    if (!model.segment_index(model.markers[k].segment))
      throw ValidationError("body.markers[" + std::to_string(k) + "].segment",
                            "unknown segment '" + model.markers[k].segment + "'");
}

inline constexpr std::size_t kOccupantSegmentCount = 12;

/// Occupant-level invariants on top of validate_tree().
inline void validate_occupant(const BodyModel& model) {
  validate_tree(model);
  if (model.segments.size() != kOccupantSegmentCount)
    throw ValidationError("body.segments", "occupant model needs exactly 12 segments");
  const double m = model.total_mass();
  if (m < 40.0 || m > 120.0) throw ValidationError("body.segments", "total mass outside [40, 120] kg");
  for (const char* name : {"pelvis", "trunk", "head", "knee_l", "knee_r"}) {
    bool found = false;
    for (const auto& mk : model.markers) found = found || mk.name == name;
    if (!found) throw ValidationError("body.markers", std::string("missing output marker '") + name + "'");
  }
}

// ---------------------------------------------------------------------------
// Default 12-segment occupant.

/// One row of the anthropometric table. Mass fractions follow de Leva (1996,
/// male) with the head+neck, trunk and limb segments regrouped into the
/// 12-segment partition; radii of gyration are fractions of `length`
/// about the segment's (sagittal, transverse, longitudinal) axes.
struct AnthropometricRow {
  const char* segment;
  double mass_fraction;
  double length;  // m at 1.75 m stature
  double r_sagittal;
  double r_transverse;
  double r_longitudinal;
};

inline constexpr std::array<AnthropometricRow, 12> kAnthropometry{{
    {"pelvis", 0.1117, 0.15, 0.615, 0.551, 0.587},
    {"lumbar", 0.1633, 0.17, 0.482, 0.383, 0.468},
    {"thoracic", 0.1396, 0.27, 0.505, 0.320, 0.465},
    {"neck", 0.0200, 0.10, 0.300, 0.300, 0.200},
    {"head", 0.0694, 0.20, 0.362, 0.376, 0.312},
    {"upper_leg_l", 0.1416, 0.42, 0.329, 0.329, 0.149},
    {"upper_leg_r", 0.1416, 0.42, 0.329, 0.329, 0.149},
    {"lower_leg_l", 0.0570, 0.45, 0.255, 0.249, 0.103},
    {"lower_leg_r", 0.0570, 0.45, 0.255, 0.249, 0.103},
    {"upper_arm_l", 0.0271, 0.30, 0.285, 0.269, 0.158},
    {"upper_arm_r", 0.0271, 0.30, 0.285, 0.269, 0.158},
    {"forearms_hands", 0.0446, 0.35, 0.276, 0.265, 0.121},
}};

inline constexpr double kReferenceStature = 1.75;
/// Seat pan tilt (front edge up); thighs rest parallel to the pan.
inline constexpr double kThighTiltRad = 8.0 * std::numbers::pi / 180.0;

struct JointGains {
  double stiffness;
  double damping;

  bool operator==(const JointGains&) const = default;
};

/// Default passive gains per calibration group.
inline const std::map<std::string, JointGains>& default_group_gains() {
  static const std::map<std::string, JointGains> gains{
      {"lumbar", {800.0, 20.0}},  {"thoracic", {800.0, 20.0}}, {"neck", {60.0, 2.0}},
      {"hip", {600.0, 10.0}},     {"knee", {80.0, 5.0}},       {"shoulder", {30.0, 2.0}},
  };
  return gains;
}

inline const std::vector<std::string>& gain_groups() {
  static const std::vector<std::string> groups{"lumbar", "thoracic", "neck", "hip", "knee", "shoulder"};
  return groups;
}

/// Builds the default erect-seated occupant scaled to `total_mass` and
/// `stature`. The zero configuration is the seated posture; rest angles are 0.
inline BodyModel build_default_body(double total_mass, double stature) {
  if (!(total_mass >= 40.0 && total_mass <= 120.0))
    throw ValidationError("total_mass", "must be within [40, 120] kg");
  if (!(stature >= 1.4 && stature <= 2.1)) throw ValidationError("stature", "must be within [1.4, 2.1] m");

  const double s = stature / kReferenceStature;
  const double ca = std::cos(kThighTiltRad);
  const double sa = std::sin(kThighTiltRad);
  const Vec3 thigh_dir(ca, 0.0, sa);
  const Vec3 pan_normal(-sa, 0.0, ca);
  const Quat thigh_rot(Eigen::AngleAxisd(-kThighTiltRad, Vec3::UnitY()));

  BodyModel model;
  model.root = "pelvis";
  model.root_joint = RootJoint::free;

  auto add_segment = [&](const AnthropometricRow& row, Vec3 com, Ellipsoid ell, int long_axis,
                         Quat axes = Quat::Identity(), double lateral_spread = 0.0) {
    SegmentSpec seg;
    seg.name = row.segment;
    seg.mass = row.mass_fraction * total_mass;
    const double len = row.length * s;
    const double sag = std::pow(row.r_sagittal * len, 2) * seg.mass;
    const double tra = std::pow(row.r_transverse * len, 2) * seg.mass;
    const double lon = std::pow(row.r_longitudinal * len, 2) * seg.mass;
    // Sagittal moments act about y. The longitudinal axis is z for upright
    // segments and x for segments lying forward (thighs, forearms).
    if (long_axis == 2) seg.principal_inertia = Vec3(tra, sag, lon);
    else seg.principal_inertia = Vec3(lon, sag, tra);
    const double spread = seg.mass * lateral_spread * lateral_spread;
    seg.principal_inertia.x() += spread;
    seg.principal_inertia.z() += spread;
    seg.principal_axes = axes;
    seg.com_offset = com * s;
    ell.center *= s;
    ell.semi_axes *= s;
    seg.contact_ellipsoid = ell;
    model.segments.push_back(seg);
  };
  auto row = [](const char* name) -> const AnthropometricRow& {
    for (const auto& r : kAnthropometry)
      if (std::string(r.segment) == name) return r;
    throw LookupError(name);
  };
  auto ellipsoid = [](Vec3 center, Vec3 axes, Quat rot = Quat::Identity()) {
    return Ellipsoid{axes, center, rot};
  };

  add_segment(row("pelvis"), {-0.03, 0.0, 0.04}, ellipsoid({-0.04, 0.0, -0.01}, {0.13, 0.17, 0.10}), 2);
  add_segment(row("lumbar"), {0.0, 0.0, 0.085}, ellipsoid({-0.04, 0.0, 0.09}, {0.11, 0.13, 0.10}), 2);
  add_segment(row("thoracic"), {0.01, 0.0, 0.13}, ellipsoid({-0.04, 0.0, 0.13}, {0.11, 0.16, 0.15}), 2);
  add_segment(row("neck"), {0.0, 0.0, 0.05}, ellipsoid({0.0, 0.0, 0.05}, {0.05, 0.05, 0.06}), 2);
  add_segment(row("head"), {0.02, 0.0, 0.09}, ellipsoid({0.02, 0.0, 0.09}, {0.10, 0.08, 0.12}), 2);
  const double thigh_len = row("upper_leg_l").length;
  const Vec3 thigh_com = 0.41 * thigh_len * thigh_dir;
  const Vec3 thigh_ell = 0.5 * thigh_len * thigh_dir - 0.03 * pan_normal;
  for (const char* leg : {"upper_leg_l", "upper_leg_r"})
    add_segment(row(leg), thigh_com, ellipsoid(thigh_ell, {0.23, 0.08, 0.075}, thigh_rot), 0, thigh_rot);
  for (const char* leg : {"lower_leg_l", "lower_leg_r"})
    add_segment(row(leg), {0.01, 0.0, -0.19}, ellipsoid({0.05, 0.0, -0.415}, {0.12, 0.05, 0.035}), 2);
  for (const char* arm : {"upper_arm_l", "upper_arm_r"})
    add_segment(row(arm), {0.0, 0.0, -0.13}, ellipsoid({0.0, 0.0, -0.15}, {0.05, 0.05, 0.16}), 2);
  // Both forearms move as one segment hinged at the right elbow, hands
  // together over the lap.
  add_segment(row("forearms_hands"), {0.17, 0.17, 0.0}, ellipsoid({0.17, 0.17, 0.0}, {0.17, 0.20, 0.05}), 0,
              Quat::Identity(), 0.15 * s);

  const auto& gains = default_group_gains();
  auto add_joint = [&](const char* name, const char* parent, const char* child, JointType type, Vec3 origin,
                       const char* group) {
    JointSpec j;
    j.name = name;
    j.parent = parent;
    j.child = child;
    j.type = type;
    j.axis = Vec3::UnitY();
    j.origin = origin * s;
    j.group = group;
    const auto& g = gains.at(group);
    j.stiffness = Vec3::Constant(g.stiffness);
    j.damping = Vec3::Constant(g.damping);
    if (type == JointType::revolute) {
      j.stiffness = Vec3(g.stiffness, 0.0, 0.0);
      j.damping = Vec3(g.damping, 0.0, 0.0);
    }
    model.joints.push_back(j);
  };
  const Vec3 knee = thigh_len * thigh_dir;
  add_joint("l5_s1", "pelvis", "lumbar", JointType::spherical, {-0.06, 0.0, 0.09}, "lumbar");
  add_joint("t12_l1", "lumbar", "thoracic", JointType::spherical, {0.0, 0.0, 0.17}, "thoracic");
  add_joint("c7_t1", "thoracic", "neck", JointType::spherical, {0.0, 0.0, 0.27}, "neck");
  add_joint("c0_c1", "neck", "head", JointType::spherical, {0.0, 0.0, 0.10}, "neck");
  add_joint("hip_l", "pelvis", "upper_leg_l", JointType::spherical, {0.0, 0.09, 0.0}, "hip");
  add_joint("hip_r", "pelvis", "upper_leg_r", JointType::spherical, {0.0, -0.09, 0.0}, "hip");
  add_joint("knee_l", "upper_leg_l", "lower_leg_l", JointType::revolute, knee, "knee");
  add_joint("knee_r", "upper_leg_r", "lower_leg_r", JointType::revolute, knee, "knee");
  add_joint("shoulder_l", "thoracic", "upper_arm_l", JointType::spherical, {0.0, 0.17, 0.22}, "shoulder");
  add_joint("shoulder_r", "thoracic", "upper_arm_r", JointType::spherical, {0.0, -0.17, 0.22}, "shoulder");
  add_joint("elbow", "upper_arm_r", "forearms_hands", JointType::revolute, {0.0, 0.0, -0.30}, "shoulder");

  model.markers = {
      {"pelvis", "pelvis", model.segments[0].com_offset},
      {"trunk", "thoracic", Vec3(0.0, 0.0, 0.27) * s},
      {"head", "head", model.segments[4].com_offset},
      {"knee_l", "upper_leg_l", knee * s},
      {"knee_r", "upper_leg_r", knee * s},
  };

  // Exact mass conservation: absorb rounding of the fractions into the trunk.
  const double residual = total_mass - model.total_mass();
  model.segments[1].mass += residual;

  validate_occupant(model);
  return model;
}

/// Overwrites the gains of every joint in each listed group. Revolute joints
/// take the scalar on their single DOF.
inline void apply_group_gains(BodyModel& model, const std::map<std::string, JointGains>& gains) {
  for (const auto& [group, g] : gains) {
    if (!(g.stiffness >= 0.0)) throw ValidationError("body.gains." + group + ".stiffness", "must be >= 0");
    if (!(g.damping >= 0.0)) throw ValidationError("body.gains." + group + ".damping", "must be >= 0");
    bool found = false;
    for (auto& j : model.joints) {
      if (j.group != group) continue;
      found = true;
      j.stiffness = j.type == JointType::revolute ? Vec3(g.stiffness, 0.0, 0.0) : Vec3::Constant(g.stiffness);
      j.damping = j.type == JointType::revolute ? Vec3(g.damping, 0.0, 0.0) : Vec3::Constant(g.damping);
    }
    if (!found) throw ValidationError("body.gains", "unknown gain group '" + group + "'");
  }
}

/// Gains of the first joint in each group.
inline std::map<std::string, JointGains> group_gains(const BodyModel& model) {
  std::map<std::string, JointGains> out;
  for (const auto& j : model.joints)
    if (!j.group.empty() && !out.count(j.group)) out[j.group] = {j.stiffness[0], j.damping[0]};
  return out;
}

}  // namespace seatsim
