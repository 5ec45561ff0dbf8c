#pragma once

// Scenario files: one YAML document with sections body, contact, foam,
// excitation, analysis, run and (for calibrate) calibration. Unknown keys are
// errors. File references resolve against the config file's directory and
// must exist at load time.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "seatsim/calibration.hpp"

namespace seatsim {

inline bool same_body(const BodyModel& a, const BodyModel& b) {
  auto q = [](const Quat& x, const Quat& y) { return x.coeffs() == y.coeffs(); };
  if (a.segments.size() != b.segments.size() || a.joints.size() != b.joints.size() ||
      a.markers.size() != b.markers.size() || a.root != b.root || a.root_joint != b.root_joint ||
      a.root_position != b.root_position || !q(a.root_orientation, b.root_orientation))
    return false;
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    const auto &s = a.segments[i], &t = b.segments[i];
    const auto &e = s.contact_ellipsoid, &f = t.contact_ellipsoid;
    if (s.name != t.name || s.mass != t.mass || s.principal_inertia != t.principal_inertia ||
        !q(s.principal_axes, t.principal_axes) || s.com_offset != t.com_offset || e.semi_axes != f.semi_axes ||
        e.center != f.center || !q(e.orientation, f.orientation))
      return false;
  }
  for (std::size_t i = 0; i < a.joints.size(); ++i) {
    const auto &j = a.joints[i], &k = b.joints[i];
    if (j.name != k.name || j.parent != k.parent || j.child != k.child || j.type != k.type || j.axis != k.axis ||
        j.origin != k.origin || j.rest_angles != k.rest_angles || j.stiffness != k.stiffness ||
        j.damping != k.damping || j.group != k.group)
      return false;
  }
  for (std::size_t i = 0; i < a.markers.size(); ++i)
    if (a.markers[i].name != b.markers[i].name || a.markers[i].segment != b.markers[i].segment ||
        a.markers[i].local != b.markers[i].local)
      return false;
  return true;
}

/// Either the generated occupant (total_mass, stature) or an explicit
/// segment/joint/marker list. Group gains apply on top of both.
struct BodyConfig {
  double total_mass = 75.0;
  double stature = 1.75;
  std::map<std::string, JointGains> gains = default_group_gains();
  std::optional<BodyModel> model;

  bool operator==(const BodyConfig& o) const {
    return total_mass == o.total_mass && stature == o.stature && gains == o.gains &&
           model.has_value() == o.model.has_value() && (!model || same_body(*model, *o.model));
  }

  BodyModel build() const {
    BodyModel b;
    if (model) {
      b = *model;
    } else {
      try {
        b = build_default_body(total_mass, stature);
      } catch (const ValidationError& e) {
        throw ConfigError("body." + e.field(), e.what());
      }
    }
    apply_group_gains(b, gains);
    validate_occupant(b);
    return b;
  }

  /// The same body as an explicit definition with the gains folded in.
  BodyConfig expanded() const {
    BodyConfig e;
    e.model = build();
    e.gains.clear();
    return e;
  }
};

struct RunConfig {
  RunSettings settings;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

struct CalibrationConfig {
  std::vector<std::string> groups = gain_groups();
  bool restraints = true;  // add k_t, c_t when the variant is MbShear
  double bound_factor = 10.0;
  std::vector<Axis> axes{Axis::vertical};
  std::map<std::string, double> weights;  // empty: 1 on every analysed body channel
  OptimizerSettings optimizer;
  std::string reference;  // run directory (<variant> level) or a single CSV

  bool operator==(const CalibrationConfig&) const = default;
};

struct ScenarioConfig {
  std::string scenario = "scenario";
  BodyConfig body;
  ContactConfig contact;
  FoamConfig foam;
  ExcitationSpec excitation;
  AnalysisConfig analysis;
  RunConfig run;
  std::optional<CalibrationConfig> calibration;

  bool operator==(const ScenarioConfig&) const = default;

  void validate() const {
    const BodyModel b = body.build();
    run.settings.validate();
    contact.validate(b);
    if (contact.variant == ContactVariant::foam_fe) foam.validate();
    ExcitationSpec ex = excitation;
    ex.duration = run.settings.duration - run.settings.settle;
    ex.validate(run.settings.dt);
    analysis.validate();
    if (calibration) {
      const auto pv = parameters(b);
      pv.validate();
      calibration->optimizer.validate(pv.size());
      if (calibration->axes.empty()) throw ConfigError("calibration.axes", "at least one axis required");
    }
  }

  ParameterVector parameters(const BodyModel& b) const {
    ContactConfig c = contact;
    if (!calibration->restraints) c.restraints.clear();
    return calibration_parameters(b, c, calibration->groups, calibration->bound_factor);
  }

  /// Simulation input for `axis` (the configured axis by default).
  SimulationInput simulation_input(std::optional<Axis> axis = std::nullopt) const {
    SimulationInput in;
    in.body = body.build();
    in.contact = contact;
    in.foam = foam;
    in.run = run.settings;
    ExcitationSpec ex = excitation;
    ex.seed = run.seed;
    if (axis) ex.axis = *axis;
    in.seat = scenario_seat_motion(ex, in.run);
    return in;
  }
};

namespace detail {

inline bool is_preset_mesh(const std::string& s) { return s == "default" || s == "fine"; }

class YamlReader {
 public:
  explicit YamlReader(std::filesystem::path base) : base_(std::move(base)) {}

  static void keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) {
    if (!n.IsMap()) throw ConfigError(path, "expected a mapping");
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
    }
  }

  template <class T>
  static void get(const YAML::Node& map, const char* key, const std::string& path, T& out) {
    const YAML::Node n = map[key];
    if (!n) return;
    const std::string p = path + "." + key;
    if (!n.IsScalar()) throw ConfigError(p, "expected a scalar");
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(p, "cannot parse '" + n.Scalar() + "'");
    }
  }

  std::string file(const YAML::Node& map, const char* key, const std::string& path, std::string current) const {
    get(map, key, path, current);
    if (current.empty() || (std::string(key) == "mesh" && is_preset_mesh(current))) return current;
    std::filesystem::path p(current);
    if (p.is_relative()) p = base_ / p;
    p = p.lexically_normal();
    if (!std::filesystem::exists(p)) throw ConfigError(path + "." + key, "file not found: " + p.string());
    return p.string();
  }

 private:
  std::filesystem::path base_;
};

inline std::vector<std::string> string_list(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ConfigError(path, "expected a list");
  std::vector<std::string> out;
  for (const auto& e : n) out.push_back(e.as<std::string>());
  return out;
}

inline Vec3 vec3(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence() || n.size() != 3) throw ConfigError(path, "expected [x, y, z]");
  try {
    return Vec3(n[0].as<double>(), n[1].as<double>(), n[2].as<double>());
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "expected numbers");
  }
}

/// Quaternions are written [w, x, y, z].
inline Quat quat(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence() || n.size() != 4) throw ConfigError(path, "expected [w, x, y, z]");
  try {
    return Quat(n[0].as<double>(), n[1].as<double>(), n[2].as<double>(), n[3].as<double>());
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "expected numbers");
  }
}

inline BodyModel parse_body(const YAML::Node& b) {
  BodyModel m;
  auto list = [&](const char* key) {
    const YAML::Node n = b[key];
    if (!n || !n.IsSequence()) throw ConfigError(std::string("body.") + key, "expected a list");
    return n;
  };
  if (const auto r = b["root"]) {
    YamlReader::keys(r, "body.root", {"segment", "joint", "position", "orientation"});
    YamlReader::get(r, "segment", "body.root", m.root);
    std::string joint = "free";
    YamlReader::get(r, "joint", "body.root", joint);
    if (joint != "free" && joint != "fixed") throw ConfigError("body.root.joint", "expected free or fixed");
    m.root_joint = joint == "free" ? RootJoint::free : RootJoint::fixed;
    if (r["position"]) m.root_position = vec3(r["position"], "body.root.position");
    if (r["orientation"]) m.root_orientation = quat(r["orientation"], "body.root.orientation");
  }
  const auto segs = list("segments");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& n = segs[i];
    const std::string p = "body.segments[" + std::to_string(i) + "]";
    YamlReader::keys(n, p, {"name", "mass", "inertia", "principal_axes", "com", "ellipsoid"});
    SegmentSpec s;
    YamlReader::get(n, "name", p, s.name);
    YamlReader::get(n, "mass", p, s.mass);
    if (n["inertia"]) s.principal_inertia = vec3(n["inertia"], p + ".inertia");
    if (n["principal_axes"]) s.principal_axes = quat(n["principal_axes"], p + ".principal_axes");
    if (n["com"]) s.com_offset = vec3(n["com"], p + ".com");
    if (const auto e = n["ellipsoid"]) {
      YamlReader::keys(e, p + ".ellipsoid", {"semi_axes", "center", "orientation"});
      if (e["semi_axes"]) s.contact_ellipsoid.semi_axes = vec3(e["semi_axes"], p + ".ellipsoid.semi_axes");
      if (e["center"]) s.contact_ellipsoid.center = vec3(e["center"], p + ".ellipsoid.center");
      if (e["orientation"]) s.contact_ellipsoid.orientation = quat(e["orientation"], p + ".ellipsoid.orientation");
    }
    m.segments.push_back(s);
  }
  const auto joints = list("joints");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& n = joints[i];
    const std::string p = "body.joints[" + std::to_string(i) + "]";
    YamlReader::keys(n, p, {"name", "parent", "child", "type", "axis", "origin", "rest", "stiffness", "damping",
                            "group"});
    JointSpec j;
    YamlReader::get(n, "name", p, j.name);
    YamlReader::get(n, "parent", p, j.parent);
    YamlReader::get(n, "child", p, j.child);
    std::string type = "spherical";
    YamlReader::get(n, "type", p, type);
    if (type != "spherical" && type != "revolute") throw ConfigError(p + ".type", "expected spherical or revolute");
    j.type = type == "spherical" ? JointType::spherical : JointType::revolute;
    if (n["axis"]) j.axis = vec3(n["axis"], p + ".axis");
    if (n["origin"]) j.origin = vec3(n["origin"], p + ".origin");
    if (n["rest"]) j.rest_angles = vec3(n["rest"], p + ".rest");
    if (n["stiffness"]) j.stiffness = vec3(n["stiffness"], p + ".stiffness");
    if (n["damping"]) j.damping = vec3(n["damping"], p + ".damping");
    YamlReader::get(n, "group", p, j.group);
    m.joints.push_back(j);
  }
  const auto markers = list("markers");
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const auto& n = markers[i];
    const std::string p = "body.markers[" + std::to_string(i) + "]";
    YamlReader::keys(n, p, {"name", "segment", "local"});
    Marker mk;
    YamlReader::get(n, "name", p, mk.name);
    YamlReader::get(n, "segment", p, mk.segment);
    if (n["local"]) mk.local = vec3(n["local"], p + ".local");
    m.markers.push_back(mk);
  }
  return m;
}

}  // namespace detail

/// Parses a scenario document; relative file references resolve against `base_dir`.
inline ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                                   const std::string& default_name = "scenario") {
  using detail::YamlReader;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config", std::string("YAML syntax error: ") + e.what());
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  YamlReader::keys(root, "", {"scenario", "body", "contact", "foam", "excitation", "analysis", "run", "calibration"});
  const YamlReader r(base_dir);
  ScenarioConfig c;
  c.scenario = default_name;
  YamlReader::get(root, "scenario", "", c.scenario);
  if (c.scenario.empty() || c.scenario.find('/') != std::string::npos)
    throw ConfigError("scenario", "must be a non-empty name without '/'");

  if (const auto b = root["body"]) {
    YamlReader::keys(b, "body", {"total_mass", "stature", "gains", "root", "segments", "joints", "markers"});
    if (b["segments"] || b["joints"] || b["markers"] || b["root"]) {
      for (const char* k : {"total_mass", "stature"})
        if (b[k]) throw ConfigError(std::string("body.") + k, "not used with an explicit body.segments list");
      c.body.model = detail::parse_body(b);
      c.body.gains.clear();
    }
    YamlReader::get(b, "total_mass", "body", c.body.total_mass);
    YamlReader::get(b, "stature", "body", c.body.stature);
    if (const auto g = b["gains"]) {
      YamlReader::keys(g, "body.gains", {gain_groups().begin(), gain_groups().end()});
      for (const auto& kv : g) {
        const auto group = kv.first.as<std::string>();
        const std::string p = "body.gains." + group;
        YamlReader::keys(kv.second, p, {"stiffness", "damping"});
        JointGains jg = c.body.gains.count(group) ? c.body.gains[group] : default_group_gains().at(group);
        YamlReader::get(kv.second, "stiffness", p, jg.stiffness);
        YamlReader::get(kv.second, "damping", p, jg.damping);
        c.body.gains[group] = jg;
      }
    }
  }

  if (const auto n = root["contact"]) {
    YamlReader::keys(n, "contact", {"variant", "mu", "v_reg", "k_n", "e", "c_n", "pan_tilt_deg", "backrest_recline_deg",
                                    "pan_segments", "backrest_segments", "restraints", "weak_springs"});
    std::string variant = variant_name(c.contact.variant);
    YamlReader::get(n, "variant", "contact", variant);
    c.contact.variant = parse_variant(variant);
    YamlReader::get(n, "mu", "contact", c.contact.mu);
    YamlReader::get(n, "v_reg", "contact", c.contact.v_reg);
    YamlReader::get(n, "k_n", "contact", c.contact.normal.k_n);
    YamlReader::get(n, "e", "contact", c.contact.normal.e);
    YamlReader::get(n, "c_n", "contact", c.contact.normal.c_n);
    YamlReader::get(n, "pan_tilt_deg", "contact", c.contact.pan_tilt_deg);
    YamlReader::get(n, "backrest_recline_deg", "contact", c.contact.backrest_recline_deg);
    if (n["pan_segments"]) c.contact.pan_segments = detail::string_list(n["pan_segments"], "contact.pan_segments");
    if (n["backrest_segments"])
      c.contact.backrest_segments = detail::string_list(n["backrest_segments"], "contact.backrest_segments");
    if (const auto list = n["restraints"]) {
      if (!list.IsSequence()) throw ConfigError("contact.restraints", "expected a list");
      c.contact.restraints.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = "contact.restraints[" + std::to_string(i) + "]";
        YamlReader::keys(list[i], p, {"segment", "k_t", "c_t"});
        RestraintSpec rs;
        YamlReader::get(list[i], "segment", p, rs.segment);
        YamlReader::get(list[i], "k_t", p, rs.k_t);
        YamlReader::get(list[i], "c_t", p, rs.c_t);
        c.contact.restraints.push_back(rs);
      }
    }
    if (const auto list = n["weak_springs"]) {
      if (!list.IsSequence()) throw ConfigError("contact.weak_springs", "expected a list");
      c.contact.weak_springs.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = "contact.weak_springs[" + std::to_string(i) + "]";
        YamlReader::keys(list[i], p, {"segment", "k_w"});
        WeakSpringSpec w;
        YamlReader::get(list[i], "segment", p, w.segment);
        YamlReader::get(list[i], "k_w", p, w.k_w);
        c.contact.weak_springs.push_back(w);
      }
    }
  }

  if (const auto n = root["foam"]) {
    YamlReader::keys(n, "foam", {"mesh", "material", "mu", "k_contact", "c_contact", "damping_ratio", "max_substeps",
                                 "layout"});
    c.foam.mesh = r.file(n, "mesh", "foam", c.foam.mesh);
    c.foam.material = r.file(n, "material", "foam", c.foam.material);
    YamlReader::get(n, "mu", "foam", c.foam.mu);
    YamlReader::get(n, "k_contact", "foam", c.foam.k_contact);
    YamlReader::get(n, "c_contact", "foam", c.foam.c_contact);
    YamlReader::get(n, "damping_ratio", "foam", c.foam.damping_ratio);
    YamlReader::get(n, "max_substeps", "foam", c.foam.max_substeps);
    if (const auto l = n["layout"]) {
      YamlReader::keys(l, "foam.layout", {"thickness", "width", "lumbar_height", "thoracic_height", "lift", "gap"});
      auto& L = c.foam.layout;
      YamlReader::get(l, "thickness", "foam.layout", L.thickness);
      YamlReader::get(l, "width", "foam.layout", L.width);
      YamlReader::get(l, "lumbar_height", "foam.layout", L.lumbar_height);
      YamlReader::get(l, "thoracic_height", "foam.layout", L.thoracic_height);
      YamlReader::get(l, "lift", "foam.layout", L.lift);
      YamlReader::get(l, "gap", "foam.layout", L.gap);
    }
  }

  if (const auto n = root["excitation"]) {
    YamlReader::keys(n, "excitation", {"kind", "axis", "f_low", "f_high", "rms_target"});
    std::string kind = excitation_kind_name(c.excitation.kind), axis = axis_name(c.excitation.axis);
    YamlReader::get(n, "kind", "excitation", kind);
    YamlReader::get(n, "axis", "excitation", axis);
    c.excitation.kind = parse_excitation_kind(kind);
    c.excitation.axis = parse_axis(axis);
    YamlReader::get(n, "f_low", "excitation", c.excitation.f_low);
    YamlReader::get(n, "f_high", "excitation", c.excitation.f_high);
    YamlReader::get(n, "rms_target", "excitation", c.excitation.rms_target);
  }

  if (const auto n = root["analysis"]) {
    YamlReader::keys(n, "analysis", {"band_low", "band_high", "window_s", "overlap"});
    YamlReader::get(n, "band_low", "analysis", c.analysis.band_low);
    YamlReader::get(n, "band_high", "analysis", c.analysis.band_high);
    YamlReader::get(n, "window_s", "analysis", c.analysis.window_s);
    YamlReader::get(n, "overlap", "analysis", c.analysis.overlap);
  }

  if (const auto n = root["run"]) {
    YamlReader::keys(n, "run", {"duration_s", "dt_s", "settle_s", "seed", "output_dir", "integrator"});
    YamlReader::get(n, "duration_s", "run", c.run.settings.duration);
    YamlReader::get(n, "dt_s", "run", c.run.settings.dt);
    YamlReader::get(n, "settle_s", "run", c.run.settings.settle);
    YamlReader::get(n, "seed", "run", c.run.seed);
    YamlReader::get(n, "output_dir", "run", c.run.output_dir);
    std::string integ = integrator_name(c.run.settings.integrator);
    YamlReader::get(n, "integrator", "run", integ);
    c.run.settings.integrator = parse_integrator(integ);
  }

  if (const auto n = root["calibration"]) {
    YamlReader::keys(n, "calibration", {"groups", "restraints", "bound_factor", "axes", "weights", "budget", "restarts",
                                        "initial_step", "reference"});
    CalibrationConfig cal;
    if (n["groups"]) cal.groups = detail::string_list(n["groups"], "calibration.groups");
    YamlReader::get(n, "restraints", "calibration", cal.restraints);
    YamlReader::get(n, "bound_factor", "calibration", cal.bound_factor);
    if (n["axes"]) {
      cal.axes.clear();
      for (const auto& a : detail::string_list(n["axes"], "calibration.axes")) {
        try {
          cal.axes.push_back(parse_axis(a));
        } catch (const ConfigError& e) {
          throw ConfigError("calibration.axes", e.what());
        }
      }
    }
    if (const auto w = n["weights"]) {
      if (!w.IsMap()) throw ConfigError("calibration.weights", "expected a mapping");
      for (const auto& kv : w) {
        const auto ch = kv.first.as<std::string>();
        YamlReader::get(w, ch.c_str(), "calibration.weights", cal.weights[ch]);
      }
    }
    YamlReader::get(n, "budget", "calibration", cal.optimizer.budget);
    YamlReader::get(n, "restarts", "calibration", cal.optimizer.restarts);
    YamlReader::get(n, "initial_step", "calibration", cal.optimizer.initial_step);
    cal.reference = r.file(n, "reference", "calibration", cal.reference);
    c.calibration = cal;
  }
  if (c.calibration) c.calibration->optimizer.seed = c.run.seed;
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path(), path.stem().string());
}

/// Canonical YAML for `c`: every field, fixed key order, shortest exact numbers.
inline std::string emit_config(const ScenarioConfig& c) {
  YAML::Emitter y;
  auto num = [&](double v) { y << format_double(v); };
  auto kv = [&](const char* k, double v) {
    y << YAML::Key << k << YAML::Value;
    num(v);
  };
  y << YAML::BeginMap;
  y << YAML::Key << "scenario" << YAML::Value << c.scenario;

  y << YAML::Key << "body" << YAML::Value << YAML::BeginMap;
  auto vec = [&](const char* k, const Vec3& v) {
    y << YAML::Key << k << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < 3; ++i) num(v[i]);
    y << YAML::EndSeq;
  };
  auto quat = [&](const char* k, const Quat& q) {
    y << YAML::Key << k << YAML::Value << YAML::Flow << YAML::BeginSeq;
    num(q.w()), num(q.x()), num(q.y()), num(q.z());
    y << YAML::EndSeq;
  };
  if (const auto& m = c.body.model) {
    y << YAML::Key << "root" << YAML::Value << YAML::BeginMap;
    y << YAML::Key << "segment" << YAML::Value << m->root;
    y << YAML::Key << "joint" << YAML::Value << (m->root_joint == RootJoint::free ? "free" : "fixed");
    vec("position", m->root_position);
    quat("orientation", m->root_orientation);
    y << YAML::EndMap;
    y << YAML::Key << "segments" << YAML::Value << YAML::BeginSeq;
    for (const auto& s : m->segments) {
      y << YAML::BeginMap << YAML::Key << "name" << YAML::Value << s.name;
      kv("mass", s.mass);
      vec("inertia", s.principal_inertia);
      quat("principal_axes", s.principal_axes);
      vec("com", s.com_offset);
      y << YAML::Key << "ellipsoid" << YAML::Value << YAML::BeginMap;
      vec("semi_axes", s.contact_ellipsoid.semi_axes);
      vec("center", s.contact_ellipsoid.center);
      quat("orientation", s.contact_ellipsoid.orientation);
      y << YAML::EndMap << YAML::EndMap;
    }
    y << YAML::EndSeq;
    y << YAML::Key << "joints" << YAML::Value << YAML::BeginSeq;
    for (const auto& j : m->joints) {
      y << YAML::BeginMap << YAML::Key << "name" << YAML::Value << j.name;
      y << YAML::Key << "parent" << YAML::Value << j.parent;
      y << YAML::Key << "child" << YAML::Value << j.child;
      y << YAML::Key << "type" << YAML::Value << (j.type == JointType::spherical ? "spherical" : "revolute");
      vec("axis", j.axis);
      vec("origin", j.origin);
      vec("rest", j.rest_angles);
      vec("stiffness", j.stiffness);
      vec("damping", j.damping);
      y << YAML::Key << "group" << YAML::Value << j.group;
      y << YAML::EndMap;
    }
    y << YAML::EndSeq;
    y << YAML::Key << "markers" << YAML::Value << YAML::BeginSeq;
    for (const auto& mk : m->markers) {
      y << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << mk.name;
      y << YAML::Key << "segment" << YAML::Value << mk.segment;
      vec("local", mk.local);
      y << YAML::EndMap;
    }
    y << YAML::EndSeq;
  } else {
    kv("total_mass", c.body.total_mass);
    kv("stature", c.body.stature);
  }
  if (!c.body.gains.empty()) {
    y << YAML::Key << "gains" << YAML::Value << YAML::BeginMap;
    for (const auto& [g, v] : c.body.gains) {
      y << YAML::Key << g << YAML::Value << YAML::Flow << YAML::BeginMap;
      kv("stiffness", v.stiffness);
      kv("damping", v.damping);
      y << YAML::EndMap;
    }
    y << YAML::EndMap;
  }
  y << YAML::EndMap;

  const auto& ct = c.contact;
  y << YAML::Key << "contact" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "variant" << YAML::Value << variant_name(ct.variant);
  kv("mu", ct.mu);
  kv("v_reg", ct.v_reg);
  kv("k_n", ct.normal.k_n);
  kv("e", ct.normal.e);
  kv("c_n", ct.normal.c_n);
  kv("pan_tilt_deg", ct.pan_tilt_deg);
  kv("backrest_recline_deg", ct.backrest_recline_deg);
  y << YAML::Key << "pan_segments" << YAML::Value << YAML::Flow << ct.pan_segments;
  y << YAML::Key << "backrest_segments" << YAML::Value << YAML::Flow << ct.backrest_segments;
  y << YAML::Key << "restraints" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : ct.restraints) {
    y << YAML::Flow << YAML::BeginMap << YAML::Key << "segment" << YAML::Value << r.segment;
    kv("k_t", r.k_t);
    kv("c_t", r.c_t);
    y << YAML::EndMap;
  }
  y << YAML::EndSeq;
  y << YAML::Key << "weak_springs" << YAML::Value << YAML::BeginSeq;
  for (const auto& w : ct.weak_springs) {
    y << YAML::Flow << YAML::BeginMap << YAML::Key << "segment" << YAML::Value << w.segment;
    kv("k_w", w.k_w);
    y << YAML::EndMap;
  }
  y << YAML::EndSeq << YAML::EndMap;

  const auto& f = c.foam;
  y << YAML::Key << "foam" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "mesh" << YAML::Value << f.mesh;
  y << YAML::Key << "material" << YAML::Value << f.material;
  kv("mu", f.mu);
  kv("k_contact", f.k_contact);
  kv("c_contact", f.c_contact);
  kv("damping_ratio", f.damping_ratio);
  y << YAML::Key << "max_substeps" << YAML::Value << f.max_substeps;
  y << YAML::Key << "layout" << YAML::Value << YAML::BeginMap;
  kv("thickness", f.layout.thickness);
  kv("width", f.layout.width);
  kv("lumbar_height", f.layout.lumbar_height);
  kv("thoracic_height", f.layout.thoracic_height);
  kv("lift", f.layout.lift);
  kv("gap", f.layout.gap);
  y << YAML::EndMap << YAML::EndMap;

  y << YAML::Key << "excitation" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value << excitation_kind_name(c.excitation.kind);
  y << YAML::Key << "axis" << YAML::Value << axis_name(c.excitation.axis);
  kv("f_low", c.excitation.f_low);
  kv("f_high", c.excitation.f_high);
  kv("rms_target", c.excitation.rms_target);
  y << YAML::EndMap;

  y << YAML::Key << "analysis" << YAML::Value << YAML::BeginMap;
  kv("band_low", c.analysis.band_low);
  kv("band_high", c.analysis.band_high);
  kv("window_s", c.analysis.window_s);
  kv("overlap", c.analysis.overlap);
  y << YAML::EndMap;

  y << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  kv("duration_s", c.run.settings.duration);
  kv("dt_s", c.run.settings.dt);
  kv("settle_s", c.run.settings.settle);
  y << YAML::Key << "seed" << YAML::Value << c.run.seed;
  y << YAML::Key << "output_dir" << YAML::Value << c.run.output_dir;
  y << YAML::Key << "integrator" << YAML::Value << integrator_name(c.run.settings.integrator);
  y << YAML::EndMap;

  if (c.calibration) {
    const auto& k = *c.calibration;
    y << YAML::Key << "calibration" << YAML::Value << YAML::BeginMap;
    y << YAML::Key << "groups" << YAML::Value << YAML::Flow << k.groups;
    y << YAML::Key << "restraints" << YAML::Value << k.restraints;
    kv("bound_factor", k.bound_factor);
    std::vector<std::string> axes;
    for (Axis a : k.axes) axes.push_back(axis_name(a));
    y << YAML::Key << "axes" << YAML::Value << YAML::Flow << axes;
    y << YAML::Key << "weights" << YAML::Value << YAML::BeginMap;
    for (const auto& [ch, w] : k.weights) kv(ch.c_str(), w);
    y << YAML::EndMap;
    y << YAML::Key << "budget" << YAML::Value << k.optimizer.budget;
    y << YAML::Key << "restarts" << YAML::Value << k.optimizer.restarts;
    kv("initial_step", k.optimizer.initial_step);
    if (!k.reference.empty()) y << YAML::Key << "reference" << YAML::Value << k.reference;
    y << YAML::EndMap;
  }
  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

/// FNV-1a of the canonical YAML, as 16 hex digits.
inline std::string config_hash(const ScenarioConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : emit_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace seatsim
