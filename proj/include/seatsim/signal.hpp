#pragma once

// Excitation synthesis and frequency-domain evaluation: Welch spectra,
// H1 transmissibility, coherence and curve comparison.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "seatsim/dynamics.hpp"
#include "seatsim/errors.hpp"

namespace seatsim {

using Complex = std::complex<double>;

// ---------------------------------------------------------------- FFT

namespace detail {

// FFTW planning is not thread safe; execution with the new-array API is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    inv_ = fftw_alloc_real(n);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(n, out_, inv_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(forward_);
      fftw_destroy_plan(backward_);
    }
    fftw_free(in_);
    fftw_free(out_);
    fftw_free(inv_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::vector<Complex> forward(const std::vector<double>& x) {
    std::copy(x.begin(), x.end(), in_);
    fftw_execute(forward_);
    std::vector<Complex> out(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k) out[k] = Complex(out_[k][0], out_[k][1]);
    return out;
  }
  /// Unnormalized inverse (FFTW convention).
  std::vector<double> backward(const std::vector<Complex>& spectrum) {
    for (int k = 0; k <= n_ / 2; ++k) {
      out_[k][0] = spectrum[k].real();
      out_[k][1] = spectrum[k].imag();
    }
    fftw_execute(backward_);
    return std::vector<double>(inv_, inv_ + n_);
  }

 private:
  int n_;
  double* in_;
  double* inv_;
  fftw_complex* out_;
  fftw_plan forward_;
  fftw_plan backward_;
};

}  // namespace detail

inline double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------- excitation

enum class ExcitationKind { band_noise, sine_sweep, single_sine };

inline const char* excitation_kind_name(ExcitationKind k) {
  switch (k) {
    case ExcitationKind::band_noise: return "band-limited-noise";
    case ExcitationKind::sine_sweep: return "sine-sweep";
    case ExcitationKind::single_sine: return "single-sine";
  }
  return "?";
}

inline ExcitationKind parse_excitation_kind(const std::string& s) {
  for (auto k : {ExcitationKind::band_noise, ExcitationKind::sine_sweep, ExcitationKind::single_sine})
    if (s == excitation_kind_name(k)) return k;
  throw ConfigError("excitation.kind", "unknown kind '" + s + "' (expected band-limited-noise, sine-sweep or single-sine)");
}

inline Axis parse_axis(const std::string& s) {
  if (s == "fore-aft") return Axis::fore_aft;
  for (auto a : {Axis::fore_aft, Axis::lateral, Axis::vertical})
    if (s == axis_name(a)) return a;
  throw ConfigError("excitation.axis", "unknown axis '" + s + "' (expected fore_aft, lateral or vertical)");
}

/// Single-sine runs at f_low.
struct ExcitationSpec {
  ExcitationKind kind = ExcitationKind::band_noise;
  Axis axis = Axis::vertical;
  double f_low = 0.5;
  double f_high = 12.0;
  double rms_target = 1.0;
  double duration = 30.0;
  std::uint64_t seed = 1;

  bool operator==(const ExcitationSpec&) const = default;

  void validate(double dt) const {
    if (!(f_low > 0.0)) throw ConfigError("excitation.f_low", "must be > 0");
    if (!(f_high > f_low)) throw ConfigError("excitation.f_high", "must exceed f_low");
    if (f_high > 0.25 / dt) throw ConfigError("excitation.f_high", "exceeds half the Nyquist frequency of dt");
    if (!(rms_target > 0.0)) throw ConfigError("excitation.rms_target", "must be > 0");
    if (!(duration > 0.0)) throw ConfigError("excitation.duration", "must be > 0");
  }
};

inline constexpr int kCrestIterations = 40;
inline constexpr double kCrestClip = 1.2;

/// Acceleration samples (duration / dt + 1 of them) scaled to rms_target.
/// Band noise is a random-phase multisine: every frequency bin of the record
/// inside [f_low, f_high] has the same amplitude and a seeded uniform phase.
inline std::vector<double> excitation_samples(const ExcitationSpec& spec, double dt) {
  spec.validate(dt);
  const auto n = static_cast<std::size_t>(std::llround(spec.duration / dt)) + 1;
  std::vector<double> a(n, 0.0);
  switch (spec.kind) {
    case ExcitationKind::band_noise: {
      const int len = static_cast<int>(n);
      const double df = 1.0 / (len * dt);
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
      std::vector<Complex> spectrum(len / 2 + 1, Complex(0.0, 0.0));
      for (int k = 1; k <= len / 2; ++k) {
        const double p = phase(rng);  // drawn for every bin so the band edges do not shift the sequence
        const double f = k * df;
        if (f >= spec.f_low && f <= spec.f_high) spectrum[k] = std::polar(1.0, p);
      }
      detail::RealFft fft(len);
      a = fft.backward(spectrum);
      // Crest-factor reduction: clip, then restore the flat magnitude while
      // keeping the new phases. A flat envelope keeps the power seen by each
      // analysis window close to the record variance.
      for (int it = 0; it < kCrestIterations; ++it) {
        const double clip = kCrestClip * rms(a);
        for (double& v : a) v = std::clamp(v, -clip, clip);
        auto c = fft.forward(a);
        for (int k = 0; k <= len / 2; ++k) {
          const double f = k * df;
          const bool in = k > 0 && f >= spec.f_low && f <= spec.f_high;
          c[k] = in && std::abs(c[k]) > 0.0 ? c[k] / std::abs(c[k]) : Complex(0.0, 0.0);
        }
        a = fft.backward(c);
      }
      break;
    }
    case ExcitationKind::sine_sweep: {
      const double rate = std::log(spec.f_high / spec.f_low) / spec.duration;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i * dt;
        a[i] = std::sin(2.0 * M_PI * spec.f_low * (std::exp(rate * t) - 1.0) / rate);
      }
      break;
    }
    case ExcitationKind::single_sine:
      for (std::size_t i = 0; i < n; ++i) a[i] = std::sin(2.0 * M_PI * spec.f_low * i * dt);
      break;
  }
  const double scale = spec.rms_target / rms(a);
  for (double& v : a) v *= scale;
  return a;
}

inline SeatMotion generate_excitation(const ExcitationSpec& spec, double dt) {
  return SeatMotion::from_acceleration(spec.axis, dt, excitation_samples(spec, dt));
}

// ---------------------------------------------------------------- spectra

struct AnalysisConfig {
  double band_low = 0.5;
  double band_high = 12.0;
  double window_s = 10.0;
  double overlap = 0.5;

  bool operator==(const AnalysisConfig&) const = default;

  void validate() const {
    if (!(band_low > 0.0)) throw ConfigError("analysis.band_low", "must be > 0");
    if (!(band_high > band_low)) throw ConfigError("analysis.band_high", "must exceed band_low");
    if (!(window_s > 0.0)) throw ConfigError("analysis.window_s", "must be > 0");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("analysis.overlap", "must be in [0, 1)");
  }
};

/// One-sided Welch estimates; sxy = E[conj(X) Y].
struct Spectra {
  std::vector<double> freqs;
  std::vector<double> sxx;
  std::vector<double> syy;
  std::vector<Complex> sxy;
  int segments = 0;
};

/// Hann-windowed, mean-removed segments; PSD scaling 2 / (fs sum w^2)
/// (1 / (fs sum w^2) at DC and Nyquist), so sum(psd) df equals the variance.
inline Spectra welch(const std::vector<double>& x, const std::vector<double>& y, double fs, double window_s,
                     double overlap) {
  if (x.size() != y.size()) throw AnalysisError("input and output series differ in length");
  const int nwin = static_cast<int>(std::llround(window_s * fs));
  if (nwin < 4) throw AnalysisError("analysis window shorter than 4 samples");
  if (x.size() < 2 * static_cast<std::size_t>(nwin))
    throw AnalysisError("series of " + std::to_string(x.size()) + " samples is shorter than two windows of " +
                        std::to_string(nwin));
  const int hop = std::max(1, static_cast<int>(std::llround(nwin * (1.0 - overlap))));
  std::vector<double> w(nwin);
  double w2 = 0.0;
  for (int i = 0; i < nwin; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / nwin);
    w2 += w[i] * w[i];
  }
  const int nf = nwin / 2 + 1;
  Spectra s;
  s.sxx.assign(nf, 0.0);
  s.syy.assign(nf, 0.0);
  s.sxy.assign(nf, Complex(0.0, 0.0));
  detail::RealFft fft(nwin);
  std::vector<double> seg(nwin);
  for (std::size_t start = 0; start + nwin <= x.size(); start += hop) {
    auto windowed = [&](const std::vector<double>& v) {
      double mean = 0.0;
      for (int i = 0; i < nwin; ++i) mean += v[start + i];
      mean /= nwin;
      for (int i = 0; i < nwin; ++i) seg[i] = (v[start + i] - mean) * w[i];
      return fft.forward(seg);
    };
    const auto fx = windowed(x);
    const auto fy = windowed(y);
    for (int k = 0; k < nf; ++k) {
      s.sxx[k] += std::norm(fx[k]);
      s.syy[k] += std::norm(fy[k]);
      s.sxy[k] += std::conj(fx[k]) * fy[k];
    }
    ++s.segments;
  }
  for (int k = 0; k < nf; ++k) {
    const double one_sided = (k == 0 || (nwin % 2 == 0 && k == nwin / 2)) ? 1.0 : 2.0;
    const double scale = one_sided / (fs * w2 * s.segments);
    s.sxx[k] *= scale;
    s.syy[k] *= scale;
    s.sxy[k] *= scale;
    s.freqs.push_back(k * fs / nwin);
  }
  return s;
}

// ---------------------------------------------------------------- transmissibility

struct ChannelResponse {
  std::string name;
  std::vector<Complex> h;
  std::vector<double> coherence;

  std::vector<double> magnitude() const {
    std::vector<double> m;
    for (const auto& v : h) m.push_back(std::abs(v));
    return m;
  }
};

/// H1 estimates on the analysis band only.
struct TransmissibilityCurve {
  std::vector<double> freqs;
  std::vector<ChannelResponse> channels;
  double band_low = 0.5;
  double band_high = 12.0;

  const ChannelResponse& channel(const std::string& name) const {
    for (const auto& c : channels)
      if (c.name == name) return c;
    throw LookupError("no channel '" + name + "'");
  }
  bool has_channel(const std::string& name) const {
    for (const auto& c : channels)
      if (c.name == name) return true;
    return false;
  }
};

inline TransmissibilityCurve transmissibility(const std::vector<double>& input,
                                              const std::vector<std::pair<std::string, std::vector<double>>>& outputs,
                                              double fs, const AnalysisConfig& cfg = {}) {
  cfg.validate();
  TransmissibilityCurve curve;
  curve.band_low = cfg.band_low;
  curve.band_high = cfg.band_high;
  bool grid = false;
  for (const auto& [name, y] : outputs) {
    const Spectra s = welch(input, y, fs, cfg.window_s, cfg.overlap);
    ChannelResponse ch;
    ch.name = name;
    for (std::size_t k = 0; k < s.freqs.size(); ++k) {
      const double f = s.freqs[k];
      if (f < cfg.band_low - 1e-9 || f > cfg.band_high + 1e-9) continue;
      if (!grid) curve.freqs.push_back(f);
      if (!(s.sxx[k] > 0.0)) throw AnalysisError("input has no power at " + std::to_string(f) + " Hz");
      ch.h.push_back(s.sxy[k] / s.sxx[k]);
      const double denom = s.sxx[k] * s.syy[k];
      ch.coherence.push_back(denom > 0.0 ? std::clamp(std::norm(s.sxy[k]) / denom, 0.0, 1.0) : 0.0);
    }
    grid = true;
    curve.channels.push_back(std::move(ch));
  }
  if (curve.freqs.empty()) throw AnalysisError("analysis band contains no frequency bins");
  return curve;
}

// ---------------------------------------------------------------- comparison

struct ChannelDifference {
  std::string name;
  double log_rms_db = 0.0;       // RMS over the band of 20 log10(|b| / |a|)
  double peak_freq_delta = 0.0;  // f_peak(b) - f_peak(a), Hz
  double peak_mag_delta = 0.0;   // |b|_peak - |a|_peak
  double peak_mag_delta_db = 0.0;
};

struct CurveComparison {
  bool resampled = false;  // b was interpolated onto a's grid
  std::vector<ChannelDifference> channels;

  const ChannelDifference& channel(const std::string& name) const {
    for (const auto& c : channels)
      if (c.name == name) return c;
    throw LookupError("no channel '" + name + "'");
  }
};

inline std::size_t peak_index(const std::vector<double>& mag) {
  return static_cast<std::size_t>(std::max_element(mag.begin(), mag.end()) - mag.begin());
}

/// Linear interpolation of `y(x)` at `at`; `x` increasing.
inline double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
  if (at <= x.front()) return y.front();
  if (at >= x.back()) return y.back();
  const auto i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), at) - x.begin());
  const double t = (at - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + t * (y[i] - y[i - 1]);
}

/// Differences of b relative to a over their common band, for channels
/// present in both.
inline CurveComparison compare_curves(const TransmissibilityCurve& a, const TransmissibilityCurve& b) {
  const double lo = std::max(a.freqs.front(), b.freqs.front());
  const double hi = std::min(a.freqs.back(), b.freqs.back());
  if (!(lo < hi)) throw ComparisonError("curves have disjoint frequency bands");
  CurveComparison out;
  out.resampled = a.freqs != b.freqs;
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < a.freqs.size(); ++k)
    if (a.freqs[k] >= lo - 1e-12 && a.freqs[k] <= hi + 1e-12) idx.push_back(k);
  for (const auto& ca : a.channels) {
    if (!b.has_channel(ca.name)) continue;
    const auto mag_a = ca.magnitude();
    const auto mag_b_raw = b.channel(ca.name).magnitude();
    std::vector<double> fa, ma, mb;
    for (std::size_t k : idx) {
      fa.push_back(a.freqs[k]);
      ma.push_back(mag_a[k]);
      mb.push_back(out.resampled ? interpolate(b.freqs, mag_b_raw, a.freqs[k]) : mag_b_raw[k]);
    }
    ChannelDifference d;
    d.name = ca.name;
    double sum = 0.0;
    for (std::size_t k = 0; k < fa.size(); ++k) {
      const double diff = 20.0 * std::log10(mb[k] / ma[k]);
      sum += diff * diff;
    }
    d.log_rms_db = std::sqrt(sum / static_cast<double>(fa.size()));
    const std::size_t pa = peak_index(ma), pb = peak_index(mb);
    d.peak_freq_delta = fa[pb] - fa[pa];
    d.peak_mag_delta = mb[pb] - ma[pa];
    d.peak_mag_delta_db = 20.0 * std::log10(mb[pb] / ma[pa]);
    out.channels.push_back(d);
  }
  return out;
}

/// Largest |H| on [f_low, f_high] and its frequency.
inline std::pair<double, double> curve_peak(const TransmissibilityCurve& c, const std::string& channel,
                                            double f_low = 0.0, double f_high = 1e9) {
  const auto mag = c.channel(channel).magnitude();
  double best = -1.0, at = 0.0;
  for (std::size_t k = 0; k < c.freqs.size(); ++k)
    if (c.freqs[k] >= f_low && c.freqs[k] <= f_high && mag[k] > best) best = mag[k], at = c.freqs[k];
  return {best, at};
}

// ---------------------------------------------------------------- CSV

/// freq_hz, then <channel>_mag, <channel>_phase_deg, <channel>_coherence.
inline void write_transmissibility_csv(const std::string& path, const TransmissibilityCurve& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("output", "cannot write " + path);
  out.precision(17);
  out << "# band_hz: " << c.band_low << ' ' << c.band_high << '\n';
  out << "freq_hz";
  for (const auto& ch : c.channels) out << ',' << ch.name << "_mag," << ch.name << "_phase_deg," << ch.name << "_coherence";
  out << '\n';
  for (std::size_t k = 0; k < c.freqs.size(); ++k) {
    out << c.freqs[k];
    for (const auto& ch : c.channels)
      out << ',' << std::abs(ch.h[k]) << ',' << std::arg(ch.h[k]) * 180.0 / M_PI << ',' << ch.coherence[k];
    out << '\n';
  }
}

inline TransmissibilityCurve read_transmissibility_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("reference", "cannot open " + path);
  TransmissibilityCurve c;
  std::string line;
  bool header = false;
  bool band = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string key;
      if (meta >> key && key == "band_hz:" && meta >> c.band_low >> c.band_high) band = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header) {
      if (cells.empty() || cells[0] != "freq_hz" || (cells.size() - 1) % 3 != 0)
        throw ConfigError("reference", path + ": bad header");
      for (std::size_t i = 1; i < cells.size(); i += 3) {
        const std::string& name = cells[i];
        if (name.size() < 5 || name.substr(name.size() - 4) != "_mag")
          throw ConfigError("reference", path + ": expected <channel>_mag column, got " + name);
        c.channels.push_back({name.substr(0, name.size() - 4), {}, {}});
      }
      header = true;
      continue;
    }
    if (cells.size() != 1 + 3 * c.channels.size()) throw ConfigError("reference", path + ": ragged row");
    try {
      c.freqs.push_back(std::stod(cells[0]));
      for (std::size_t j = 0; j < c.channels.size(); ++j) {
        const double mag = std::stod(cells[1 + 3 * j]);
        const double phase = std::stod(cells[2 + 3 * j]) * M_PI / 180.0;
        c.channels[j].h.push_back(std::polar(mag, phase));
        c.channels[j].coherence.push_back(std::stod(cells[3 + 3 * j]));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("reference", path + ": non-numeric cell");
    }
  }
  if (!header || c.freqs.empty()) throw ConfigError("reference", path + ": no data rows");
  if (!band) {
    c.band_low = c.freqs.front();
    c.band_high = c.freqs.back();
  }
  return c;
}

}  // namespace seatsim
