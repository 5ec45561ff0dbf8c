#include <gtest/gtest.h>

#include "seatsim/signal.hpp"
#include "support/sdof.hpp"

namespace seatsim {
namespace {

constexpr double kDt = 1e-3;

ExcitationSpec noise(double duration, std::uint64_t seed = 7) {
  ExcitationSpec s;
  s.duration = duration;
  s.seed = seed;
  return s;
}

std::vector<double> full_periodogram(const std::vector<double>& x) {
  detail::RealFft fft(static_cast<int>(x.size()));
  std::vector<double> p;
  for (const auto& c : fft.forward(x)) p.push_back(std::norm(c));
  return p;
}

TEST(GenerateExcitation, SameSeedSameSeries) {
  EXPECT_EQ(excitation_samples(noise(35.0), kDt), excitation_samples(noise(35.0), kDt));
  EXPECT_NE(excitation_samples(noise(35.0, 1), kDt), excitation_samples(noise(35.0, 2), kDt));
}

TEST(GenerateExcitation, LengthAndRms) {
  const SeatMotion m = generate_excitation(noise(35.0), kDt);
  EXPECT_EQ(m.acceleration.size(), 35001u);
  const double r = rms(m.acceleration);
  EXPECT_GE(r, 0.99);
  EXPECT_LE(r, 1.01);
}

TEST(GenerateExcitation, RejectsBandAboveHalfNyquist) {
  ExcitationSpec s = noise(10.0);
  s.f_high = 300.0;
  try {
    excitation_samples(s, kDt);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "excitation.f_high");
  }
}

TEST(GenerateExcitation, NoisePeriodogramIsFlatInBandAndEmptyOutside) {
  const ExcitationSpec s = noise(35.0);
  const auto x = excitation_samples(s, kDt);
  const auto p = full_periodogram(x);
  const double df = 1.0 / (x.size() * kDt);
  double in_max = 0.0, in_min = INFINITY, out_max = 0.0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    const double f = k * df;
    if (f >= s.f_low && f <= s.f_high) {
      in_max = std::max(in_max, p[k]);
      in_min = std::min(in_min, p[k]);
    } else if (f <= s.f_low / 4 || f >= 4 * s.f_high) {
      out_max = std::max(out_max, p[k]);
    }
  }
  EXPECT_LT(10 * std::log10(in_max / in_min), 6.0);  // +-3 dB
  EXPECT_LT(10 * std::log10(out_max / in_min + 1e-300), -40.0);
}

// Single Welch bins from six windows scatter by about 40%, so flatness is
// checked on 1 Hz averages; the exact per-bin property is the periodogram test.
TEST(GenerateExcitation, WelchSpectrumFlatInsideBand) {
  const ExcitationSpec s = noise(35.0);
  const auto x = excitation_samples(s, kDt);
  const Spectra sp = welch(x, x, 1.0 / kDt, 10.0, 0.5);
  std::vector<double> bands;
  for (double lo = 1.0; lo + 1.0 <= 11.5; lo += 1.0) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < sp.freqs.size(); ++k)
      if (sp.freqs[k] >= lo && sp.freqs[k] < lo + 1.0) sum += sp.sxx[k], ++n;
    bands.push_back(sum / n);
  }
  double mean = 0.0;
  for (double b : bands) mean += b / bands.size();
  for (double b : bands) EXPECT_LT(std::abs(10 * std::log10(b / mean)), 3.0);
  for (std::size_t k = 0; k < sp.freqs.size(); ++k) {
    if (sp.freqs[k] >= 48.0) {
      EXPECT_LT(10 * std::log10(sp.sxx[k] / mean), -40.0) << sp.freqs[k];
    }
  }
}

TEST(GenerateExcitation, ParsevalWithinThreePercent) {
  for (auto kind : {ExcitationKind::band_noise, ExcitationKind::sine_sweep, ExcitationKind::single_sine})
  for (double duration : {30.0, 35.0})
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    ExcitationSpec s = noise(duration, seed);
    s.kind = kind;
    s.f_low = kind == ExcitationKind::single_sine ? 2.0 : 0.5;
    const auto x = excitation_samples(s, kDt);
    const Spectra sp = welch(x, x, 1.0 / kDt, 10.0, 0.5);
    const double df = sp.freqs[1] - sp.freqs[0];
    double area = 0.0;
    for (double v : sp.sxx) area += v * df;
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v / x.size();
    for (double v : x) var += (v - mean) * (v - mean) / x.size();
    EXPECT_NEAR(area / var, 1.0, 0.03) << excitation_kind_name(kind) << " " << duration << " s seed " << seed;
  }
}

TEST(GenerateExcitation, SingleSinePeakDominates) {
  ExcitationSpec s = noise(35.0);
  s.kind = ExcitationKind::single_sine;
  s.f_low = 2.0;
  const auto x = excitation_samples(s, kDt);
  const auto p = full_periodogram(x);
  const auto peak = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  EXPECT_NEAR(peak / (x.size() * kDt), 2.0, 1.0 / 35.0);
  double other = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (k != peak) other = std::max(other, p[k]);
  EXPECT_GT(10 * std::log10(p[peak] / other), 40.0);
}

TEST(Transmissibility, IdentityIsUnityWithFullCoherence) {
  const auto x = excitation_samples(noise(30.0), kDt);
  const auto c = transmissibility(x, {{"same", x}}, 1.0 / kDt);
  ASSERT_FALSE(c.freqs.empty());
  EXPECT_GE(c.freqs.front(), 0.5);
  EXPECT_LE(c.freqs.back(), 12.0);
  for (std::size_t k = 0; k < c.freqs.size(); ++k) {
    EXPECT_NEAR(std::abs(c.channels[0].h[k] - Complex(1.0, 0.0)), 0.0, 1e-10);
    EXPECT_NEAR(c.channels[0].coherence[k], 1.0, 1e-10);
  }
}

TEST(Transmissibility, PureDelayGivesLinearPhase) {
  const auto x = excitation_samples(noise(40.0), kDt);
  const int lag = 20;
  const double tau = lag * kDt;
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = lag; i < x.size(); ++i) y[i] = x[i - lag];
  const auto c = transmissibility(x, {{"delayed", y}}, 1.0 / kDt);
  double sxx = 0, sxy = 0, sx = 0, sy = 0;
  const double n = static_cast<double>(c.freqs.size());
  double unwrapped = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < c.freqs.size(); ++k) {
    const Complex h = c.channels[0].h[k];
    EXPECT_NEAR(std::abs(h), 1.0, 0.01) << c.freqs[k];
    double ph = std::arg(h);
    if (k > 0) {
      while (ph - prev > M_PI) ph -= 2 * M_PI;
      while (ph - prev < -M_PI) ph += 2 * M_PI;
    }
    prev = unwrapped = ph;
    const double f = c.freqs[k];
    sx += f, sy += unwrapped, sxx += f * f, sxy += f * unwrapped;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope, -2 * M_PI * tau, 1e-3);
}

TEST(Transmissibility, SdofMatchesClosedForm) {
  const testing::Sdof sdof;
  const auto x = excitation_samples(noise(60.0), kDt);
  const auto y = sdof.respond(x, kDt);
  // Drop the start-up transient.
  const std::vector<double> xs(x.begin() + 5000, x.end()), ys(y.begin() + 5000, y.end());
  const auto c = transmissibility(xs, {{"mass", ys}}, 1.0 / kDt);
  for (std::size_t k = 0; k < c.freqs.size(); ++k) {
    const double f = c.freqs[k];
    if (f > 10.0) continue;
    EXPECT_NEAR(std::abs(c.channels[0].h[k]) / sdof.magnitude(f), 1.0, 0.02) << f;
    EXPECT_GE(c.channels[0].coherence[k], 0.95) << f;
  }
}

TEST(Transmissibility, ShortSeriesIsAnAnalysisError) {
  const std::vector<double> x(15000, 1.0);
  EXPECT_THROW(transmissibility(x, {{"y", x}}, 1.0 / kDt), AnalysisError);
}

TransmissibilityCurve peaked(double f_peak, double scale) {
  TransmissibilityCurve c;
  ChannelResponse ch{"head_az", {}, {}};
  for (double f = 0.5; f <= 12.0 + 1e-9; f += 0.1) {
    c.freqs.push_back(f);
    ch.h.push_back(scale / (1.0 + std::pow(f - f_peak, 2)));
    ch.coherence.push_back(1.0);
  }
  c.channels.push_back(ch);
  return c;
}

TEST(CompareCurves, Definitions) {
  const auto a = peaked(4.0, 1.0);
  const auto same = compare_curves(a, a);
  EXPECT_EQ(same.channel("head_az").log_rms_db, 0.0);
  EXPECT_EQ(same.channel("head_az").peak_freq_delta, 0.0);
  EXPECT_EQ(same.channel("head_az").peak_mag_delta, 0.0);
  EXPECT_FALSE(same.resampled);

  EXPECT_NEAR(compare_curves(a, peaked(4.0, 2.0)).channel("head_az").log_rms_db, 20 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(compare_curves(a, peaked(5.0, 1.0)).channel("head_az").peak_freq_delta, 1.0, 1e-9);
}

TEST(CompareCurves, DisjointBandsAreAnError) {
  auto a = peaked(4.0, 1.0);
  auto b = peaked(4.0, 1.0);
  for (double& f : b.freqs) f += 20.0;
  EXPECT_THROW(compare_curves(a, b), ComparisonError);
}

TEST(CompareCurves, ResamplesOtherGrids) {
  const auto a = peaked(4.0, 1.0);
  auto b = peaked(4.0, 1.0);
  for (double& f : b.freqs) f += 0.05;
  const auto r = compare_curves(a, b);
  EXPECT_TRUE(r.resampled);
  EXPECT_LT(r.channel("head_az").log_rms_db, 0.5);
}

TEST(TransmissibilityCsv, RoundTripIsExact) {
  const auto a = peaked(4.0, 1.5);
  const std::string path = ::testing::TempDir() + "/tr.csv";
  write_transmissibility_csv(path, a);
  const auto b = read_transmissibility_csv(path);
  ASSERT_EQ(b.freqs, a.freqs);
  for (std::size_t k = 0; k < a.freqs.size(); ++k) {
    EXPECT_NEAR(std::abs(b.channels[0].h[k] - a.channels[0].h[k]), 0.0, 1e-14);
    EXPECT_EQ(b.channels[0].coherence[k], 1.0);
  }
  EXPECT_EQ(b.band_low, a.band_low);
}

}  // namespace
}  // namespace seatsim
