#pragma once

// Gain identification against reference transmissibility curves. Parameters
// are searched in log space; candidates outside the bounds are projected onto
// them and the projection is counted in the trace.

#include <atomic>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "seatsim/simulation.hpp"

namespace seatsim {

inline constexpr double kDivergencePenalty = 1e6;

struct Parameter {
  std::string name;  // "<group>.stiffness", "<group>.damping", "restraints.k_t", "restraints.c_t"
  double value = 1.0;
  double lower = 0.1;
  double upper = 10.0;

  bool operator==(const Parameter&) const = default;
};

struct ParameterVector {
  std::vector<Parameter> entries;

  std::size_t size() const { return entries.size(); }
  bool operator==(const ParameterVector&) const = default;

  void validate() const {
    if (entries.empty()) throw ConfigError("calibration.parameters", "no parameters to calibrate");
    for (const auto& p : entries) {
      if (!(p.lower > 0.0 && p.upper > p.lower))
        throw ValidationError("calibration.bounds", p.name + ": bounds must satisfy 0 < lower < upper");
      if (!(p.value >= p.lower && p.value <= p.upper))
        throw ValidationError("calibration.bounds", p.name + " = " + format_double(p.value) + " outside bounds");
    }
  }
  const Parameter& at(const std::string& name) const {
    for (const auto& p : entries)
      if (p.name == name) return p;
    throw LookupError("unknown parameter '" + name + "'");
  }
  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto& p : entries) v.push_back(p.value);
    return v;
  }
  ParameterVector with(const std::vector<double>& v) const {
    ParameterVector out = *this;
    for (std::size_t i = 0; i < v.size(); ++i) out.entries[i].value = v[i];
    return out;
  }
};

/// The calibration vector for `groups` at the gains currently in `body`,
/// plus k_t and c_t for MbShear. Bounds are [value / spread, value * spread].
inline ParameterVector calibration_parameters(const BodyModel& body, const ContactConfig& contact,
                                              const std::vector<std::string>& groups, double spread) {
  if (!(spread > 1.0)) throw ConfigError("calibration.bound_factor", "must be > 1");
  const auto gains = group_gains(body);
  ParameterVector pv;
  auto add = [&](const std::string& name, double v) {
    if (!(v > 0.0)) throw ConfigError("calibration.parameters", name + " must be > 0 to calibrate in log space");
    pv.entries.push_back({name, v, v / spread, v * spread});
  };
  for (const auto& g : groups) {
    const auto it = gains.find(g);
    if (it == gains.end()) throw ConfigError("calibration.groups", "unknown gain group '" + g + "'");
    add(g + ".stiffness", it->second.stiffness);
    add(g + ".damping", it->second.damping);
  }
  if (contact.variant == ContactVariant::mb_shear && !contact.restraints.empty()) {
    add("restraints.k_t", contact.restraints.front().k_t);
    add("restraints.c_t", contact.restraints.front().c_t);
  }
  return pv;
}

/// Writes `p` into the body gains and restraints of a simulation input.
inline void apply_parameters(const ParameterVector& p, BodyModel& body, ContactConfig& contact) {
  std::map<std::string, JointGains> gains = group_gains(body);
  for (const auto& e : p.entries) {
    const auto dot = e.name.find('.');
    const std::string group = e.name.substr(0, dot), field = e.name.substr(dot + 1);
    if (group == "restraints") {
      if (contact.variant != ContactVariant::mb_shear)
        throw ConfigError("calibration.parameters", "restraint entries require contact.variant MbShear");
      for (auto& r : contact.restraints) (field == "k_t" ? r.k_t : r.c_t) = e.value;
    } else if (field == "stiffness") {
      gains.at(group).stiffness = e.value;
    } else {
      gains.at(group).damping = e.value;
    }
  }
  apply_group_gains(body, gains);
}

// ---------------------------------------------------------------- objective

struct Scenario {
  SimulationInput input;  // seat motion already set for `axis`
  Axis axis = Axis::vertical;
  TransmissibilityCurve reference;
};

struct Objective {
  std::vector<Scenario> scenarios;
  std::map<std::string, double> weights;  // channel -> weight; missing channels weigh 0
  AnalysisConfig analysis;

  void validate() const {
    if (scenarios.empty()) throw ConfigError("calibration.axes", "no scenarios");
    double total = 0.0;
    for (const auto& [ch, w] : weights) {
      if (!(w >= 0.0)) throw ConfigError("calibration.weights." + ch, "must be >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("calibration.weights", "all weights are zero");
    for (const auto& s : scenarios) {
      const auto& r = s.reference;
      if (std::abs(r.band_low - analysis.band_low) > 1e-9 || std::abs(r.band_high - analysis.band_high) > 1e-9)
        throw ConfigError("calibration.reference", "reference band [" + format_double(r.band_low) + ", " +
                                                       format_double(r.band_high) + "] Hz differs from analysis band");
    }
  }
};

/// Band RMS of the dB magnitude error between two curves on a shared grid.
inline double log_magnitude_rms(const TransmissibilityCurve& sim, const TransmissibilityCurve& ref,
                                const std::string& channel) {
  return std::abs(compare_curves(ref, sim).channel(channel).log_rms_db);
}

/// Sum over scenarios and weighted channels of the dB RMS error. Diverged
/// simulations cost kDivergencePenalty.
inline double evaluate(const ParameterVector& params, const Objective& obj) {
  double cost = 0.0;
  for (const auto& sc : obj.scenarios) {
    SimulationInput in = sc.input;
    apply_parameters(params, in.body, in.contact);
    TransmissibilityCurve curve;
    try {
      curve = analyse_trajectory(simulate(in), sc.axis, in.run.settle, obj.analysis);
    } catch (const DivergenceError&) {
      return kDivergencePenalty;
    } catch (const NumericalError&) {
      return kDivergencePenalty;
    }
    for (const auto& [ch, w] : obj.weights) {
      if (w == 0.0 || !sc.reference.has_channel(ch) || !curve.has_channel(ch)) continue;
      const double e = log_magnitude_rms(curve, sc.reference, ch);
      cost += std::isfinite(e) ? w * e : kDivergencePenalty;
    }
  }
  return std::min(cost, kDivergencePenalty);
}

/// Runs `fn` on every index with up to `jobs` threads; results land in order.
inline std::vector<double> parallel_map(std::size_t n, int jobs, const std::function<double(std::size_t)>& fn) {
  std::vector<double> out(n);
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

// ---------------------------------------------------------------- optimizer

struct OptimizerSettings {
  int budget = 600;
  int restarts = 3;  // random restarts after the first descent
  std::uint64_t seed = 1;
  double initial_step = 0.3;  // simplex edge in log units
  double x_tolerance = 1e-6;  // simplex diameter in log units
  double f_tolerance = 1e-10;
  int jobs = 1;

  bool operator==(const OptimizerSettings&) const = default;

  void validate(std::size_t dim) const {
    if (budget < static_cast<int>(dim) + 2)
      throw ConfigError("calibration.budget", "must be >= dimension + 2 = " + std::to_string(dim + 2));
    if (restarts < 0) throw ConfigError("calibration.restarts", "must be >= 0");
    if (!(initial_step > 0.0)) throw ConfigError("calibration.initial_step", "must be > 0");
  }
};

struct TraceEntry {
  int evaluation = 0;
  double cost = 0.0;
  double best = 0.0;
  bool projected = false;
  std::vector<double> params;
};

struct OptimizationResult {
  ParameterVector best;
  double best_cost = INFINITY;
  std::vector<TraceEntry> trace;
  int projections = 0;
};

/// Bounded Nelder-Mead in log space with dimension-adapted coefficients,
/// followed by `restarts` descents from the incumbent with seeded random
/// simplex orientations. Stops at the evaluation budget.
inline OptimizationResult optimize(const std::function<double(const ParameterVector&)>& cost,
                                   const ParameterVector& initial, const OptimizerSettings& settings) {
  initial.validate();
  const std::size_t n = initial.size();
  settings.validate(n);
  const double dn = static_cast<double>(n);
  const double alpha = 1.0, beta = 1.0 + 2.0 / dn, gamma = 0.75 - 0.5 / dn, delta = 1.0 - 1.0 / dn;

  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = std::log(initial.entries[i].lower);
    hi[i] = std::log(initial.entries[i].upper);
  }
  using Point = std::vector<double>;
  OptimizationResult result;
  result.best = initial;

  auto to_params = [&](const Point& y) {
    Point v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(y[i]);
    return initial.with(v);
  };
  auto project = [&](Point& y) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::clamp(y[i], lo[i], hi[i]);
      moved = moved || c != y[i];
      y[i] = c;
    }
    return moved;
  };
  auto budget_left = [&] { return settings.budget - static_cast<int>(result.trace.size()); };
  // Evaluates a batch (in parallel when jobs > 1) and logs it in order.
  auto evaluate_batch = [&](std::vector<Point>& ys) {
    std::vector<bool> moved(ys.size());
    for (std::size_t k = 0; k < ys.size(); ++k) moved[k] = project(ys[k]);
    const auto costs = parallel_map(ys.size(), settings.jobs, [&](std::size_t k) { return cost(to_params(ys[k])); });
    for (std::size_t k = 0; k < ys.size(); ++k) {
      const ParameterVector p = to_params(ys[k]);
      if (costs[k] < result.best_cost) {
        result.best_cost = costs[k];
        result.best = p;
      }
      result.projections += moved[k] ? 1 : 0;
      result.trace.push_back({static_cast<int>(result.trace.size()), costs[k], result.best_cost,
                              static_cast<bool>(moved[k]), p.values()});
    }
    return costs;
  };
  auto evaluate_one = [&](Point& y) {
    std::vector<Point> b{y};
    const double c = evaluate_batch(b)[0];
    y = b[0];
    return c;
  };

  std::mt19937_64 rng(settings.seed);
  Point start(n);
  for (std::size_t i = 0; i < n; ++i) start[i] = std::log(initial.entries[i].value);

  for (int round = 0; round <= settings.restarts && budget_left() > 0; ++round) {
    // Simplex around the start: axis steps, randomly rotated on restarts.
    Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(static_cast<int>(n), static_cast<int>(n));
    if (round > 0) {
      std::normal_distribution<double> g(0.0, 1.0);
      Eigen::MatrixXd r(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) r(i, j) = g(rng);
      basis = Eigen::HouseholderQR<Eigen::MatrixXd>(r).householderQ();
    }
    std::vector<Point> simplex{start};
    for (std::size_t j = 0; j < n; ++j) {
      Point y = start;
      // Step away from a nearby bound instead of into it.
      for (std::size_t i = 0; i < n; ++i) y[i] += settings.initial_step * basis(i, j);
      if (y != start && project(y)) {
        y = start;
        for (std::size_t i = 0; i < n; ++i) y[i] -= settings.initial_step * basis(i, j);
      }
      simplex.push_back(y);
    }
    const std::size_t take = std::min<std::size_t>(simplex.size(), static_cast<std::size_t>(budget_left()));
    simplex.resize(take);
    std::vector<double> f = evaluate_batch(simplex);
    if (take < n + 1) break;

    while (budget_left() > 0) {
      std::vector<std::size_t> order(n + 1);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
      std::vector<Point> s2;
      std::vector<double> f2;
      for (auto k : order) s2.push_back(simplex[k]), f2.push_back(f[k]);
      simplex = std::move(s2);
      f = std::move(f2);

      double diameter = 0.0;
      for (std::size_t k = 1; k <= n; ++k)
        for (std::size_t i = 0; i < n; ++i) diameter = std::max(diameter, std::abs(simplex[k][i] - simplex[0][i]));
      if (diameter < settings.x_tolerance || f[n] - f[0] < settings.f_tolerance * (1.0 + std::abs(f[0]))) break;

      Point centroid(n, 0.0);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[k][i] / dn;
      auto along = [&](double t) {
        Point y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = centroid[i] + t * (simplex[n][i] - centroid[i]);
        return y;
      };

      Point xr = along(-alpha);
      const double fr = evaluate_one(xr);
      if (fr < f[0]) {
        if (budget_left() == 0) {
          simplex[n] = xr, f[n] = fr;
          break;
        }
        Point xe = along(-alpha * beta);
        const double fe = evaluate_one(xe);
        if (fe < fr) simplex[n] = xe, f[n] = fe;
        else simplex[n] = xr, f[n] = fr;
      } else if (fr < f[n - 1]) {
        simplex[n] = xr, f[n] = fr;
      } else {
        if (budget_left() == 0) break;
        const bool outside = fr < f[n];
        Point xc = along(outside ? -alpha * gamma : gamma);
        const double fc = evaluate_one(xc);
        if (fc < std::min(fr, f[n])) {
          simplex[n] = xc, f[n] = fc;
        } else {
          std::vector<Point> shrunk;
          for (std::size_t k = 1; k <= n; ++k) {
            Point y(n);
            for (std::size_t i = 0; i < n; ++i) y[i] = simplex[0][i] + delta * (simplex[k][i] - simplex[0][i]);
            shrunk.push_back(y);
          }
          const std::size_t m = std::min<std::size_t>(shrunk.size(), static_cast<std::size_t>(budget_left()));
          shrunk.resize(m);
          const auto fs = evaluate_batch(shrunk);
          for (std::size_t k = 0; k < m; ++k) simplex[k + 1] = shrunk[k], f[k + 1] = fs[k];
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) start[i] = std::log(result.best.entries[i].value);
  }
  return result;
}

/// Calibration report: evaluation index, cost, best-so-far, projection flag,
/// then one column per parameter.
inline void write_trace_csv(const std::string& path, const ParameterVector& names, const OptimizationResult& r) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("run.output_dir", "cannot write " + path);
  f << "evaluation,cost,best_cost,projected";
  for (const auto& p : names.entries) f << ',' << p.name;
  f << '\n';
  for (const auto& e : r.trace) {
    f << e.evaluation << ',' << format_double(e.cost) << ',' << format_double(e.best) << ',' << (e.projected ? 1 : 0);
    for (double v : e.params) f << ',' << format_double(v);
    f << '\n';
  }
}

}  // namespace seatsim
