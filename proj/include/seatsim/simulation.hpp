#pragma once

// Full occupant runs: settle, excite, record. Every step samples the absolute
// marker accelerations and the trunk/head angular velocities, so a run of
// duration T at dt has T/dt + 1 rows.

#include <charconv>
#include <chrono>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seatsim/contact.hpp"
#include "seatsim/foam.hpp"
#include "seatsim/signal.hpp"

namespace seatsim {

/// Shortest round-trip decimal form; identical bits give identical text.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

enum class Integrator { semi_implicit, rk4 };

inline const char* integrator_name(Integrator i) { return i == Integrator::rk4 ? "rk4" : "semi-implicit-euler"; }

inline Integrator parse_integrator(const std::string& s) {
  if (s == "semi-implicit-euler") return Integrator::semi_implicit;
  if (s == "rk4") return Integrator::rk4;
  throw ConfigError("run.integrator", "unknown integrator '" + s + "'");
}

struct RunSettings {
  double duration = 35.0;
  double dt = 1e-3;
  double settle = 5.0;
  Integrator integrator = Integrator::semi_implicit;

  bool operator==(const RunSettings&) const = default;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("run.dt_s", "must be > 0");
    if (!(settle >= 0.0)) throw ConfigError("run.settle_s", "must be >= 0");
    if (!(duration > settle)) throw ConfigError("run.duration_s", "must exceed run.settle_s");
  }
  std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }
  std::size_t settle_steps() const { return static_cast<std::size_t>(std::llround(settle / dt)); }
};

/// Seat at rest for the settling phase, then `spec` for the remaining time.
/// The excitation's own duration is replaced by duration - settle.
inline SeatMotion scenario_seat_motion(ExcitationSpec spec, const RunSettings& run) {
  run.validate();
  spec.duration = run.duration - run.settle;
  std::vector<double> a(run.settle_steps(), 0.0);
  const auto tail = excitation_samples(spec, run.dt);
  a.insert(a.end(), tail.begin(), tail.end());
  return SeatMotion::from_acceleration(spec.axis, run.dt, std::move(a));
}

/// Column-major channel table sampled every dt from t = 0.
struct Trajectory {
  double dt = 1e-3;
  std::vector<double> time;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  std::vector<std::pair<std::string, std::string>> metadata;  // deterministic, written as '#' lines
  // In-memory diagnostics, not serialized.
  double wall_clock_s = 0.0;
  std::vector<Vec3> settled_positions;  // markers at the end of settling, seat frame
  std::vector<Vec3> final_positions;    // markers at the last sample, seat frame
  Vec3 final_contact_force = Vec3::Zero();
  double max_friction_cone_ratio = 0.0;

  std::size_t samples() const { return time.size(); }
  bool has(const std::string& name) const { return std::find(names.begin(), names.end(), name) != names.end(); }
  const std::vector<double>& channel(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return columns[i];
    throw LookupError("unknown trajectory channel '" + name + "'");
  }
  std::string meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return v;
    throw LookupError("trajectory has no metadata '" + key + "'");
  }
};

inline constexpr std::array<const char*, 2> kAngularMarkers{"trunk", "head"};

/// Trajectory channel names: seat_a*, then <marker>_a* per body marker, then
/// trunk_w*, head_w*. The seat channel is the prescribed input acceleration.
inline std::vector<std::string> trajectory_channels(const BodyModel& body) {
  std::vector<std::string> out;
  auto push3 = [&](const std::string& base, const char* kind) {
    for (const char* ax : {"x", "y", "z"}) out.push_back(base + "_" + kind + ax);
  };
  push3("seat", "a");
  for (const auto& m : body.markers) push3(m.name, "a");
  for (const char* m : kAngularMarkers) push3(m, "w");
  return out;
}

struct SimulationInput {
  BodyModel body;
  ContactConfig contact;
  FoamConfig foam;
  SeatMotion seat;  // covers the whole run, including settling
  RunSettings run;
};

namespace detail {

// Samples one row. Accelerations come from the velocity update of the step
// that starts at this state, so row i holds the derivative at t_i.
struct Recorder {
  const Multibody& mb;
  std::vector<int> marker_body;
  std::vector<Vec3> marker_local;
  std::vector<int> angular_body;

  explicit Recorder(const Multibody& m) : mb(m) {
    for (const auto& mk : mb.model().markers) {
      marker_body.push_back(mb.body_of_segment(*mb.model().segment_index(mk.segment)));
      marker_local.push_back(mk.local);
    }
    for (const char* name : kAngularMarkers) {
      const auto& mk = mb.model().marker(name);
      angular_body.push_back(mb.body_of_segment(*mb.model().segment_index(mk.segment)));
    }
  }

  std::vector<Vec3> positions(const Kinematics& kin) const {
    std::vector<Vec3> x;
    for (std::size_t k = 0; k < marker_body.size(); ++k) x.push_back(kin.point(marker_body[k], marker_local[k]));
    return x;
  }
  std::vector<Vec3> velocities(const Kinematics& kin) const {
    std::vector<Vec3> v;
    for (std::size_t k = 0; k < marker_body.size(); ++k)
      v.push_back(kin.point_velocity(marker_body[k], kin.point(marker_body[k], marker_local[k])));
    return v;
  }
};

}  // namespace detail

/// Runs the occupant on `in.seat`. Restraint anchors freeze at the end of
/// settling. FoamFE couples staggered: body step against the foam state,
/// then the foam subcycles against the new body pose.
inline Trajectory simulate(const SimulationInput& in) {
  in.run.validate();
  in.contact.validate(in.body);
  const double dt = in.run.dt;
  if (std::abs(in.seat.dt - dt) > 1e-12 * dt) throw ConfigError("run.dt_s", "seat motion sampled at a different dt");
  const std::size_t n = in.run.steps();
  if (in.seat.acceleration.size() < n + 1)
    throw ConfigError("excitation.duration", "seat motion shorter than run.duration_s");

  const Multibody mb(in.body);
  SystemState s = mb.initial_state();
  const SeatGeometry geometry = default_seat_geometry(mb, s, in.contact);
  ContactState cs = attach_contacts(in.contact, geometry, mb, forward_kinematics(mb, s));
  std::unique_ptr<FoamBackrest> foam;
  if (in.contact.variant == ContactVariant::foam_fe) {
    if (in.run.integrator == Integrator::rk4) throw ConfigError("run.integrator", "rk4 does not support FoamFE");
    foam = std::make_unique<FoamBackrest>(make_foam_backrest(in.foam, in.contact, geometry, mb, dt));
  }

  const detail::Recorder rec(mb);
  Trajectory traj;
  traj.dt = dt;
  traj.names = trajectory_channels(in.body);
  traj.columns.assign(traj.names.size(), std::vector<double>(n + 1, 0.0));
  traj.time.resize(n + 1);
  const std::size_t nm = rec.marker_body.size();

  const auto start = std::chrono::steady_clock::now();
  Kinematics kin = forward_kinematics(mb, s);
  std::vector<Vec3> vel = rec.velocities(kin);
  // One extra step past the end supplies the derivative for the last row.
  for (std::size_t i = 0; i <= n; ++i) {
    if (i == in.run.settle_steps()) {
      if (in.contact.variant == ContactVariant::mb_shear) anchor_restraints(cs, mb, kin);
      traj.settled_positions = rec.positions(kin);
    }
    const Vec3 a_seat = in.seat.direction() * in.seat.acceleration[i];
    SystemState next;
    if (in.run.integrator == Integrator::rk4) {
      auto loads = [&](const SystemState& st) {
        return assemble_contact_forces(in.contact, geometry, mb, forward_kinematics(mb, st), cs).ext;
      };
      next = step_rk4(mb, s, loads, in.seat, dt);
    } else {
      const ContactOutput out = assemble_contact_forces(in.contact, geometry, mb, kin, cs, foam.get());
      traj.max_friction_cone_ratio = std::max(traj.max_friction_cone_ratio, out.friction_cone_ratio());
      traj.final_contact_force = out.total_force();
      try {
        next = step(mb, s, out.ext, out.impedances, a_seat, dt);
      } catch (const DivergenceError& e) {
        throw DivergenceError(s.t + dt, e.coordinate());
      }
    }
    const Kinematics kin_next = forward_kinematics(mb, next);
    const std::vector<Vec3> vel_next = rec.velocities(kin_next);

    traj.time[i] = static_cast<double>(i) * dt;
    for (int c = 0; c < 3; ++c) traj.columns[c][i] = a_seat[c];
    for (std::size_t k = 0; k < nm; ++k) {
      const Vec3 a = (vel_next[k] - vel[k]) / dt + a_seat;
      for (int c = 0; c < 3; ++c) traj.columns[3 + 3 * k + c][i] = a[c];
    }
    for (std::size_t k = 0; k < rec.angular_body.size(); ++k) {
      const Vec3 w = kin.angular_velocity(rec.angular_body[k]);
      for (int c = 0; c < 3; ++c) traj.columns[3 + 3 * nm + 3 * k + c][i] = w[c];
    }
    if (i == n) {
      traj.final_positions = rec.positions(kin);
      break;
    }

    s = std::move(next);
    kin = kin_next;
    vel = vel_next;
    if (foam) {
      try {
        foam->advance(mb, kin, kGravity - a_seat, dt);
      } catch (const DivergenceError& e) {
        throw DivergenceError(s.t, e.coordinate());
      } catch (const ElementError& e) {
        throw DivergenceError(s.t, std::string("foam ") + e.what());
      }
    }
  }
  traj.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  traj.metadata = {
      {"variant", variant_name(in.contact.variant)},
      {"axis", axis_name(in.seat.axis)},
      {"dt_s", format_double(dt)},
      {"duration_s", format_double(in.run.duration)},
      {"settle_s", format_double(in.run.settle)},
      {"integrator", integrator_name(in.run.integrator)},
      {"samples", std::to_string(n + 1)},
  };
  if (foam) {
    traj.metadata.emplace_back("foam_elements", std::to_string(foam->model().mesh().tets.size()));
    traj.metadata.emplace_back("foam_substeps", std::to_string(foam->substeps()));
  }
  return traj;
}

/// The analysed part of a channel: samples from the end of settling on.
inline std::vector<double> analysed(const Trajectory& t, const std::string& channel, double settle) {
  const auto& c = t.channel(channel);
  const auto first = static_cast<std::size_t>(std::llround(settle / t.dt));
  if (first >= c.size()) throw AnalysisError("settling phase covers the whole trajectory");
  return {c.begin() + static_cast<long>(first), c.end()};
}

inline const char* axis_suffix(Axis a) {
  switch (a) {
    case Axis::fore_aft: return "x";
    case Axis::lateral: return "y";
    case Axis::vertical: return "z";
  }
  return "z";
}

/// Angular outputs are about the axis orthogonal to the excitation in its
/// plane of motion: pitch (y) for fore-aft and vertical, roll (x) for lateral.
inline const char* angular_suffix(Axis a) { return a == Axis::lateral ? "x" : "y"; }

/// Channels reported for an excitation axis: seat and marker accelerations
/// along the axis, then trunk and head angular velocity.
inline std::vector<std::string> analysis_channels(const Trajectory& t, Axis axis) {
  std::vector<std::string> out;
  for (const auto& name : t.names) {
    const bool accel = name.size() > 3 && name.compare(name.size() - 3, 3, std::string("_a") + axis_suffix(axis)) == 0;
    const bool rate = name.size() > 3 && name.compare(name.size() - 3, 3, std::string("_w") + angular_suffix(axis)) == 0;
    if (accel || rate) out.push_back(name);
  }
  return out;
}

inline TransmissibilityCurve analyse_trajectory(const Trajectory& t, Axis axis, double settle,
                                                const AnalysisConfig& cfg = {}) {
  const auto input = analysed(t, std::string("seat_a") + axis_suffix(axis), settle);
  std::vector<std::pair<std::string, std::vector<double>>> outputs;
  for (const auto& name : analysis_channels(t, axis)) outputs.emplace_back(name, analysed(t, name, settle));
  return transmissibility(input, outputs, 1.0 / t.dt, cfg);
}

// ---------------------------------------------------------------- CSV

inline void write_trajectory_csv(const std::string& path, const Trajectory& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("run.output_dir", "cannot write " + path);
  for (const auto& [k, v] : t.metadata) f << "# " << k << ": " << v << '\n';
  f << "time_s";
  for (const auto& n : t.names) f << ',' << n;
  f << '\n';
  std::string line;
  char buf[32];
  for (std::size_t i = 0; i < t.samples(); ++i) {
    line.clear();
    auto put = [&](double v) {
      const auto r = std::to_chars(buf, buf + sizeof buf, v);
      line.append(buf, r.ptr);
    };
    put(t.time[i]);
    for (const auto& c : t.columns) {
      line.push_back(',');
      put(c[i]);
    }
    line.push_back('\n');
    f << line;
  }
  if (!f) throw ConfigError("run.output_dir", "failed writing " + path);
}

inline Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw LookupError("cannot open trajectory " + path);
  Trajectory t;
  std::string line;
  bool header = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos)
        t.metadata.emplace_back(line.substr(2, colon - 2), line.substr(std::min(line.size(), colon + 2)));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header) {
      if (cells.empty() || cells[0] != "time_s") throw AnalysisError(path + ": missing time_s header");
      t.names.assign(cells.begin() + 1, cells.end());
      t.columns.resize(t.names.size());
      header = true;
      continue;
    }
    if (cells.size() != t.names.size() + 1) throw AnalysisError(path + ": ragged row");
    auto parse = [&](const std::string& c) {
      double v = 0.0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (r.ec != std::errc()) throw AnalysisError(path + ": bad number '" + c + "'");
      return v;
    };
    t.time.push_back(parse(cells[0]));
    for (std::size_t k = 0; k < t.names.size(); ++k) t.columns[k].push_back(parse(cells[k + 1]));
  }
  if (!header) throw AnalysisError(path + ": empty trajectory");
  if (t.time.size() > 1) t.dt = (t.time.back() - t.time.front()) / static_cast<double>(t.time.size() - 1);
  return t;
}

}  // namespace seatsim
