#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "seatsim/simulation.hpp"

namespace seatsim {
namespace {

SimulationInput stationary(ContactVariant v, double duration) {
  SimulationInput in;
  in.body = build_default_body(75.0, 1.75);
  in.contact.variant = v;
  in.run.duration = duration;
  in.seat = SeatMotion::stationary(duration, in.run.dt);
  return in;
}

SimulationInput excited(ContactVariant v, Axis axis, double duration, std::uint64_t seed = 1) {
  SimulationInput in = stationary(v, duration);
  ExcitationSpec ex;
  ex.axis = axis;
  ex.seed = seed;
  in.seat = scenario_seat_motion(ex, in.run);
  return in;
}

double tail_rms(const std::vector<double>& x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = x.size() - n; i < x.size(); ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(n));
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TEST(Simulate, OneRowPerStep) {
  const Trajectory t = simulate(stationary(ContactVariant::mb_shear, 35.0));
  EXPECT_EQ(t.samples(), 35001u);
  for (const auto& c : t.columns) EXPECT_EQ(c.size(), 35001u);
  EXPECT_DOUBLE_EQ(t.time.back(), 35.0);
  EXPECT_GT(t.wall_clock_s, 0.0);
  EXPECT_EQ(t.names.front(), "seat_ax");
  EXPECT_TRUE(t.has("knee_r_az"));
  EXPECT_TRUE(t.has("head_wz"));
}

TEST(Simulate, ZeroExcitationSettles) {
  for (auto v : {ContactVariant::mb_shear, ContactVariant::mb_friction}) {
    const Trajectory t = simulate(stationary(v, 35.0));
    for (const auto& name : t.names) {
      if (name.find("_a") == std::string::npos || name.rfind("seat", 0) == 0) continue;
      EXPECT_LT(tail_rms(t.channel(name), 5000), 1e-3) << variant_name(v) << " " << name;
    }
    EXPECT_NEAR(t.final_contact_force.z() / (75.0 * 9.81), 1.0, 0.01) << variant_name(v);
  }
}

// Steady state over the last 10 s (exactly 20 periods) under a small 2 Hz
// vertical sine: the head response has no content away from 2 Hz.
TEST(Simulate, SineResponseIsPeriodic) {
  SimulationInput in = stationary(ContactVariant::mb_shear, 25.0);
  ExcitationSpec ex;
  ex.kind = ExcitationKind::single_sine;
  ex.f_low = 2.0;
  ex.rms_target = 0.1;
  in.seat = scenario_seat_motion(ex, in.run);
  const Trajectory t = simulate(in);
  const auto& head = t.channel("head_az");
  const int n = 10000;
  std::vector<double> tail(head.end() - n, head.end());
  detail::RealFft fft(n);
  const auto spec = fft.forward(tail);
  const double df = 1.0 / (n * in.run.dt);
  double peak = 0.0, outside = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    const double f = k * df, m = std::abs(spec[k]);
    if (std::abs(f - 2.0) <= 0.2) {
      peak = std::max(peak, m);
    } else {
      outside = std::max(outside, m);
    }
  }
  EXPECT_LT(outside, 0.05 * peak);
}

TEST(Simulate, SeatChannelHasUnitTransmissibility) {
  const Trajectory t = simulate(excited(ContactVariant::mb_shear, Axis::vertical, 25.0));
  const auto c = analyse_trajectory(t, Axis::vertical, 5.0);
  for (std::size_t k = 0; k < c.freqs.size(); ++k)
    EXPECT_NEAR(std::abs(c.channel("seat_az").h[k]), 1.0, 0.01) << c.freqs[k];
}

TEST(Simulate, NoiseFreeResponseIsCoherentInVertical) {
  const Trajectory t = simulate(excited(ContactVariant::mb_shear, Axis::vertical, 35.0));
  const auto c = analyse_trajectory(t, Axis::vertical, 5.0);
  for (const char* ch : {"pelvis_az", "trunk_az", "head_az"})
    for (double v : c.channel(ch).coherence) EXPECT_GE(v, 0.95) << ch;
}

TEST(Simulate, AnalysisChannelsFollowTheAxis) {
  SimulationInput in = stationary(ContactVariant::mb_shear, 1.0);
  in.run.settle = 0.5;
  const Trajectory t = simulate(in);
  const auto lat = analysis_channels(t, Axis::lateral);
  EXPECT_NE(std::find(lat.begin(), lat.end(), "trunk_wx"), lat.end());
  EXPECT_NE(std::find(lat.begin(), lat.end(), "knee_l_ay"), lat.end());
  EXPECT_EQ(std::find(lat.begin(), lat.end(), "head_az"), lat.end());
  const auto fa = analysis_channels(t, Axis::fore_aft);
  EXPECT_NE(std::find(fa.begin(), fa.end(), "head_wy"), fa.end());
  EXPECT_EQ(fa.size(), 8u);
}

TEST(Simulate, DeterministicFiles) {
  const std::string dir = ::testing::TempDir();
  for (int run = 0; run < 2; ++run) {
    const Trajectory t = simulate(excited(ContactVariant::mb_friction, Axis::lateral, 12.0, 42));
    write_trajectory_csv(dir + "/det" + std::to_string(run) + ".csv", t);
    write_transmissibility_csv(dir + "/det_tr" + std::to_string(run) + ".csv",
                               analyse_trajectory(t, Axis::lateral, 5.0, AnalysisConfig{0.5, 12.0, 3.0, 0.5}));
  }
  EXPECT_EQ(slurp(dir + "/det0.csv"), slurp(dir + "/det1.csv"));
  EXPECT_EQ(slurp(dir + "/det_tr0.csv"), slurp(dir + "/det_tr1.csv"));
}

TEST(TrajectoryCsv, RoundTripIsExact) {
  const Trajectory t = simulate(excited(ContactVariant::mb_shear, Axis::fore_aft, 6.0));
  const std::string path = ::testing::TempDir() + "/traj.csv";
  write_trajectory_csv(path, t);
  const Trajectory r = read_trajectory_csv(path);
  EXPECT_EQ(r.names, t.names);
  EXPECT_EQ(r.time, t.time);
  EXPECT_EQ(r.columns, t.columns);
  EXPECT_EQ(r.meta("variant"), "MbShear");
  EXPECT_EQ(r.meta("samples"), "6001");
  const std::string text = slurp(path);
  EXPECT_EQ(text.find("wall"), std::string::npos);  // runtime goes to the manifest
}

TEST(Simulate, DivergenceReportsTime) {
  SimulationInput in = stationary(ContactVariant::mb_shear, 6.0);
  in.seat.acceleration[3000] = std::numeric_limits<double>::quiet_NaN();
  try {
    simulate(in);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NEAR(e.time(), 3.001, 1e-9);
  }
}

TEST(Simulate, RejectsBadRunSettings) {
  SimulationInput in = stationary(ContactVariant::mb_shear, 5.0);
  in.run.dt = 0.0;
  try {
    simulate(in);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "run.dt_s");
  }
  in = stationary(ContactVariant::mb_shear, 5.0);
  in.run.settle = 6.0;
  EXPECT_THROW(simulate(in), ConfigError);
}

TEST(Simulate, FrictionConeHoldsEveryStep) {
  const Trajectory t = simulate(excited(ContactVariant::mb_friction, Axis::lateral, 15.0));
  EXPECT_GT(t.max_friction_cone_ratio, 0.0);
  EXPECT_LE(t.max_friction_cone_ratio, 1.0 + 1e-12);
}

TEST(WeakSprings, StopLateralDrift) {
  SimulationInput with = excited(ContactVariant::mb_friction, Axis::lateral, 35.0);
  SimulationInput without = with;
  for (auto& w : without.contact.weak_springs) w.k_w = 0.0;
  const Trajectory a = simulate(with), b = simulate(without);
  auto drift = [](const Trajectory& t) { return std::abs(t.final_positions[0].y() - t.settled_positions[0].y()); };
  EXPECT_GT(drift(b), drift(a));
}

TEST(WeakSprings, BarelyChangeVerticalTransmissibility) {
  SimulationInput with = excited(ContactVariant::mb_friction, Axis::vertical, 35.0);
  SimulationInput without = with;
  for (auto& w : without.contact.weak_springs) w.k_w = 0.0;
  const auto a = analyse_trajectory(simulate(with), Axis::vertical, 5.0);
  const auto b = analyse_trajectory(simulate(without), Axis::vertical, 5.0);
  for (const auto& ch : a.channels) {
    const double pa = curve_peak(a, ch.name, 0.5, 12.0).first, pb = curve_peak(b, ch.name, 0.5, 12.0).first;
    EXPECT_LT(std::abs(pb / pa - 1.0), 0.02) << ch.name;
  }
}

}  // namespace
}  // namespace seatsim
