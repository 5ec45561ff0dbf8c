#pragma once

// Command implementations behind the seatsim executable. Each returns the
// process exit code and writes human-readable progress to `log`, errors to
// `err`.
//
// Layout: <root>/<scenario>/<variant>/<axis>/{trajectory.csv,
// transmissibility.csv, plots/<channel>.svg, manifest.json}. Comparisons go
// to <root>/<scenario>/comparison/, calibrations to
// <root>/<scenario>/<variant>/calibration/.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "seatsim/config.hpp"
#include "seatsim/plot.hpp"

#ifndef SEATSIM_VERSION
#define SEATSIM_VERSION "0.0.0"
#endif

namespace seatsim::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitMissingRun = 4;

struct Overrides {
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

/// A config file plus its parsed content with command-line overrides applied.
struct LoadedConfig {
  fs::path path;
  ScenarioConfig config;
  fs::path root;  // output root

  fs::path run_dir() const {
    return root / config.scenario / variant_name(config.contact.variant) / axis_name(config.excitation.axis);
  }
};

inline LoadedConfig load(const fs::path& path, const Overrides& o) {
  LoadedConfig l{path, load_config(path), {}};
  if (o.seed) {
    l.config.run.seed = *o.seed;
    if (l.config.calibration) l.config.calibration->optimizer.seed = *o.seed;
  }
  if (l.config.calibration) l.config.calibration->optimizer.jobs = std::max(1, o.jobs);
  l.root = o.out ? *o.out : fs::path(l.config.run.output_dir);
  return l;
}

/// `path` itself, or every *.yaml / *.yml directly inside it, sorted by name.
inline std::vector<fs::path> config_files(const fs::path& path) {
  if (!fs::is_directory(path)) {
    if (!fs::exists(path)) throw ConfigError("config", "no such file: " + path.string());
    return {path};
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(path)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".yaml" || ext == ".yml")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("config", "no .yaml files in " + path.string());
  return out;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("output", "cannot write " + p.string());
  f << text;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Relative paths in the manifest; every listed file must exist and be non-empty.
inline nlohmann::ordered_json manifest(const LoadedConfig& l, double wall_clock_s, const fs::path& dir,
                                       const std::vector<fs::path>& files) {
  nlohmann::ordered_json m;
  m["tool_version"] = SEATSIM_VERSION;
  m["config"] = l.path.filename().string();
  m["config_hash"] = config_hash(l.config);
  m["scenario"] = l.config.scenario;
  m["variant"] = variant_name(l.config.contact.variant);
  m["axis"] = axis_name(l.config.excitation.axis);
  m["seed"] = l.config.run.seed;
  m["wall_clock_s"] = wall_clock_s;
  auto list = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    if (!fs::exists(f) || fs::file_size(f) == 0) throw Error("output file missing or empty: " + f.string());
    list.push_back({{"path", fs::relative(f, dir).generic_string()}, {"bytes", fs::file_size(f)}});
  }
  m["files"] = list;
  return m;
}

inline std::vector<PlotPanel> channel_panels(const TransmissibilityCurve& c, const ChannelResponse& ch) {
  PlotPanel mag{ch.name + " transmissibility", "frequency (Hz)", ch.name.find("_w") != std::string::npos
                                                                    ? "|H| (rad/s per m/s^2)"
                                                                    : "|H| (-)",
                {{ch.name, c.freqs, ch.magnitude()}}};
  PlotPanel coh{ch.name + " coherence", "frequency (Hz)", "coherence (-)", {{ch.name, c.freqs, ch.coherence}}};
  return {mag, coh};
}

struct RunResult {
  int code = kExitOk;
  std::string message;
};

/// One simulate run; never throws.
inline RunResult simulate_run(const LoadedConfig& l) {
  std::ostringstream msg;
  try {
    const auto& c = l.config;
    const fs::path dir = l.run_dir();
    fs::create_directories(dir / "plots");
    const auto t0 = std::chrono::steady_clock::now();
    const Trajectory traj = simulate(c.simulation_input());
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const TransmissibilityCurve curve = analyse_trajectory(traj, c.excitation.axis, c.run.settings.settle, c.analysis);

    std::vector<fs::path> files{dir / "trajectory.csv", dir / "transmissibility.csv"};
    write_trajectory_csv(files[0].string(), traj);
    write_transmissibility_csv(files[1].string(), curve);
    for (const auto& ch : curve.channels) {
      files.push_back(dir / "plots" / (ch.name + ".svg"));
      write_svg(files.back().string(), channel_panels(curve, ch));
    }
    write_text(dir / "manifest.json", manifest(l, wall, dir, files).dump(2) + "\n");
    msg << dir.string() << ": " << traj.samples() << " samples, wall clock " << format_double(wall) << " s\n";
    return {kExitOk, msg.str()};
  } catch (const DivergenceError& e) {
    msg << l.path.string() << ": divergence at t = " << format_double(e.time()) << " s (" << e.coordinate() << ")\n";
    return {kExitDivergence, msg.str()};
  } catch (const ConfigError& e) {
    msg << l.path.string() << ": config error at " << e.what() << "\n";
    return {kExitConfig, msg.str()};
  } catch (const ValidationError& e) {
    msg << l.path.string() << ": config error at " << e.what() << "\n";
    return {kExitConfig, msg.str()};
  }
}

/// Reports the first config error with its field path.
template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error at " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    err << "config error at " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "divergence at t = " << format_double(e.time()) << " s (" << e.coordinate() << ")\n";
    return kExitDivergence;
  }
}

/// Runs one config, or every config in a directory (up to `jobs` at once).
/// The exit code is the largest of the per-run codes.
inline int cmd_simulate(const fs::path& config, const Overrides& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<LoadedConfig> runs;
    for (const auto& f : config_files(config)) runs.push_back(load(f, o));
    std::vector<RunResult> results(runs.size());
    parallel_map(runs.size(), std::max(1, o.jobs), [&](std::size_t i) {
      results[i] = simulate_run(runs[i]);
      return 0.0;
    });
    int code = kExitOk;
    for (const auto& r : results) {
      (r.code == kExitOk ? log : err) << r.message;
      code = std::max(code, r.code);
    }
    return code;
  });
}

// ---------------------------------------------------------------- compare

/// Variant order used for pairs and plot legends.
inline int variant_rank(ContactVariant v) {
  switch (v) {
    case ContactVariant::foam_fe: return 0;
    case ContactVariant::mb_friction: return 1;
    case ContactVariant::mb_shear: return 2;
  }
  return 3;
}

struct CompletedRun {
  LoadedConfig cfg;
  TransmissibilityCurve curve;
  double wall_clock_s = 0.0;
  std::string label;  // variant, or variant plus config name when a variant repeats
};

inline int cmd_compare(const fs::path& config_dir, const Overrides& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto files = config_files(config_dir);
    if (files.size() < 2) throw ConfigError("config", "compare needs a directory with at least two configs");
    std::vector<CompletedRun> runs;
    for (const auto& f : files) {
      CompletedRun r{load(f, o), {}, 0.0, {}};
      const fs::path dir = r.cfg.run_dir();
      if (!fs::exists(dir / "transmissibility.csv") || !fs::exists(dir / "manifest.json")) {
        err << "missing run for " << f.string() << ": expected results in " << dir.string()
            << " (run 'seatsim simulate' first)\n";
        return kExitMissingRun;
      }
      r.curve = read_transmissibility_csv((dir / "transmissibility.csv").string());
      r.wall_clock_s = nlohmann::json::parse(read_text(dir / "manifest.json")).at("wall_clock_s").get<double>();
      runs.push_back(std::move(r));
    }
    std::stable_sort(runs.begin(), runs.end(), [](const CompletedRun& a, const CompletedRun& b) {
      return variant_rank(a.cfg.config.contact.variant) < variant_rank(b.cfg.config.contact.variant);
    });
    // Group by output root, scenario and axis.
    std::map<std::tuple<std::string, std::string, int>, std::vector<CompletedRun*>> groups;
    for (auto& r : runs)
      groups[{r.cfg.root.string(), r.cfg.config.scenario, static_cast<int>(r.cfg.config.excitation.axis)}].push_back(&r);
    for (auto& [key, members] : groups)
      for (auto* r : members) {
        r->label = variant_name(r->cfg.config.contact.variant);
        int same = 0;
        for (const auto* q : members) same += q->cfg.config.contact.variant == r->cfg.config.contact.variant ? 1 : 0;
        if (same > 1) r->label += " (" + r->cfg.path.stem().string() + ")";
      }

    std::map<fs::path, std::string> reports;
    for (const auto& [key, members] : groups) {
      const auto& first = *members.front();
      const Axis axis = first.cfg.config.excitation.axis;
      const fs::path out = first.cfg.root / first.cfg.config.scenario / "comparison" / axis_name(axis);
      fs::create_directories(out / "plots");
      std::string& report = reports[first.cfg.root / first.cfg.config.scenario / "comparison" / "report.txt"];
      report += "axis " + std::string(axis_name(axis)) + "\n";
      if (members.size() < 2) {
        report += "  only one run (" + first.label + "); nothing to compare\n\n";
        continue;
      }

      std::string peaks = "variant,channel,peak_hz,peak_magnitude\n";
      for (const auto* r : members)
        for (const auto& ch : r->curve.channels) {
          const auto [mag, f] = curve_peak(r->curve, ch.name, r->curve.band_low, r->curve.band_high);
          peaks += r->label + "," + ch.name + "," + format_double(f) + "," + format_double(mag) + "\n";
        }
      write_text(out / "peaks.csv", peaks);

      std::string metrics = "variant_a,variant_b,channel,log_rms_db,peak_freq_delta_hz,peak_mag_delta,"
                            "peak_mag_delta_db,resampled\n";
      report += "  " + std::string("pair / channel") + std::string(31, ' ') + "log_rms_dB  dpeak_Hz  dpeak_mag\n";
      for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j) {
          const auto cmp = compare_curves(members[i]->curve, members[j]->curve);
          for (const auto& d : cmp.channels) {
            metrics += members[i]->label + "," + members[j]->label + "," + d.name + "," + format_double(d.log_rms_db) +
                       "," + format_double(d.peak_freq_delta) + "," + format_double(d.peak_mag_delta) + "," +
                       format_double(d.peak_mag_delta_db) + "," + (cmp.resampled ? "1" : "0") + "\n";
            if (d.name.rfind("seat", 0) == 0) continue;  // identical input on every run
            char line[160];
            const std::string pair = members[i]->label + " vs " + members[j]->label + " / " + d.name;
            std::snprintf(line, sizeof line, "  %-44s %10.3f %9.3f %10.4f\n", pair.c_str(), d.log_rms_db,
                          d.peak_freq_delta, d.peak_mag_delta);
            report += line;
          }
        }
      write_text(out / "metrics.csv", metrics);

      for (const auto& ch : first.curve.channels) {
        PlotPanel p{std::string(axis_name(axis)) + ": " + ch.name, "frequency (Hz)", "|H|", {}};
        for (const auto* r : members)
          if (r->curve.has_channel(ch.name))
            p.series.push_back({r->label, r->curve.freqs, r->curve.channel(ch.name).magnitude()});
        write_svg((out / "plots" / (ch.name + ".svg")).string(), {p});
      }

      std::string runtime = "variant,wall_clock_s,ratio_to_fe\n";
      const CompletedRun* fe = nullptr;
      for (const auto* r : members)
        if (r->cfg.config.contact.variant == ContactVariant::foam_fe && !fe) fe = r;
      for (const auto* r : members) {
        runtime += r->label + "," + format_double(r->wall_clock_s) + ",";
        if (fe && r != fe && r->cfg.config.contact.variant != ContactVariant::foam_fe) {
          const double ratio = fe->wall_clock_s / r->wall_clock_s;
          runtime += format_double(ratio);
          char line[160];
          std::snprintf(line, sizeof line, "  wall clock %s / %s = %.2f (%.2f s / %.2f s)\n", fe->label.c_str(),
                        r->label.c_str(), ratio, fe->wall_clock_s, r->wall_clock_s);
          report += line;
        }
        runtime += "\n";
      }
      write_text(out / "runtime.csv", runtime);
      report += "\n";
    }
    for (const auto& [path, text] : reports) {
      write_text(path, text);
      log << text << "report: " << path.string() << "\n";
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------- calibrate

/// A reference is one transmissibility CSV (single calibration axis) or a
/// directory holding <axis>/transmissibility.csv per calibration axis.
inline TransmissibilityCurve reference_for(const fs::path& ref, Axis axis, std::size_t axes) {
  if (fs::is_directory(ref)) {
    const fs::path p = ref / axis_name(axis) / "transmissibility.csv";
    if (!fs::exists(p)) throw ConfigError("calibration.reference", "missing " + p.string());
    return read_transmissibility_csv(p.string());
  }
  if (axes != 1)
    throw ConfigError("calibration.reference", "a single CSV serves one axis; give a directory with one per axis");
  return read_transmissibility_csv(ref.string());
}

inline int cmd_calibrate(const fs::path& config, const std::optional<fs::path>& reference, const Overrides& o,
                         std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const LoadedConfig l = load(config, o);
    const ScenarioConfig& c = l.config;
    if (!c.calibration) throw ConfigError("calibration", "section required for calibrate");
    const auto& cal = *c.calibration;
    const fs::path ref = reference ? *reference : fs::path(cal.reference);
    if (ref.empty()) throw ConfigError("calibration.reference", "no reference given");
    if (!fs::exists(ref)) throw ConfigError("calibration.reference", "no such path: " + ref.string());

    Objective obj;
    obj.analysis = c.analysis;
    obj.weights = cal.weights;
    for (Axis a : cal.axes) {
      Scenario sc{c.simulation_input(a), a, reference_for(ref, a, cal.axes.size())};
      if (cal.weights.empty())
        for (const auto& ch : sc.reference.channels)
          if (ch.name.rfind("seat", 0) != 0) obj.weights[ch.name] = 1.0;
      obj.scenarios.push_back(std::move(sc));
    }
    obj.validate();

    const BodyModel body = c.body.build();
    const ParameterVector start = c.parameters(body);
    log << "calibrating " << start.size() << " parameters on " << cal.axes.size() << " axis/axes, budget "
        << cal.optimizer.budget << "\n";
    const auto t0 = std::chrono::steady_clock::now();
    const OptimizationResult res = optimize([&](const ParameterVector& p) { return evaluate(p, obj); }, start,
                                            cal.optimizer);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path dir = l.root / c.scenario / variant_name(c.contact.variant) / "calibration";
    fs::create_directories(dir);
    std::vector<fs::path> files{dir / "trace.csv", dir / "calibrated.yaml", dir / "cost.svg"};
    write_trace_csv(files[0].string(), start, res);

    ScenarioConfig out = c;
    BodyModel b = body;
    apply_parameters(res.best, b, out.contact);
    for (const auto& [g, v] : group_gains(b)) out.body.gains[g] = v;
    out.calibration.reset();
    write_text(files[1], emit_config(out));

    PlotSeries cost{"best cost", {}, {}};
    for (const auto& e : res.trace) cost.x.push_back(e.evaluation), cost.y.push_back(e.best);
    write_svg(files[2].string(), {{"calibration cost", "evaluation", "cost (dB)", {cost}}});

    auto m = manifest(l, wall, dir, files);
    m["evaluations"] = res.trace.size();
    m["initial_cost"] = res.trace.front().cost;
    m["best_cost"] = res.best_cost;
    write_text(dir / "manifest.json", m.dump(2) + "\n");

    log << "initial cost " << format_double(res.trace.front().cost) << ", best " << format_double(res.best_cost)
        << " after " << res.trace.size() << " evaluations\n";
    for (const auto& p : res.best.entries) log << "  " << p.name << " = " << format_double(p.value) << "\n";
    log << "wrote " << dir.string() << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------- validate

/// Parses and validates; with `out`, writes the canonical config with the
/// body expanded into explicit segments, joints and markers.
inline int cmd_validate(const fs::path& config, const Overrides& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    for (const auto& f : config_files(config)) {
      const LoadedConfig l = load(f, o);
      l.config.body.build();
      log << f.string() << ": ok (" << variant_name(l.config.contact.variant) << ", "
          << axis_name(l.config.excitation.axis) << ", hash " << config_hash(l.config) << ")\n";
      if (o.out) {
        ScenarioConfig e = l.config;
        e.body = e.body.expanded();
        const fs::path target = fs::is_directory(config) ? *o.out / f.filename() : *o.out;
        if (target.has_parent_path()) fs::create_directories(target.parent_path());
        write_text(target, emit_config(e));
      }
    }
    return kExitOk;
  });
}

}  // namespace seatsim::cli
