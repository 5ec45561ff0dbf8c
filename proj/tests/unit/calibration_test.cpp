#include <gtest/gtest.h>

#include "seatsim/calibration.hpp"

namespace seatsim {
namespace {

ParameterVector box(const std::vector<double>& start) {
  ParameterVector p;
  for (std::size_t i = 0; i < start.size(); ++i) p.entries.push_back({"p" + std::to_string(i), start[i], 0.1, 10.0});
  return p;
}

// Convex quadratic with a coupled Hessian; minimum at `kMin`.
const std::vector<double> kMin{0.5, 1.0, 2.0, 3.0, 0.8, 1.5};

double quadratic(const ParameterVector& p) {
  const auto x = p.values();
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - kMin[i];
    f += (1.0 + i) * d * d;
    if (i + 1 < x.size()) f += 0.5 * d * (x[i + 1] - kMin[i + 1]);
  }
  return f;
}

TEST(Optimize, QuadraticIn6D) {
  OptimizerSettings s;
  s.budget = 500;
  const auto r = optimize(quadratic, box({1, 1, 1, 1, 1, 1}), s);
  EXPECT_LE(r.trace.size(), 500u);
  for (std::size_t i = 0; i < kMin.size(); ++i) EXPECT_NEAR(r.best.entries[i].value, kMin[i], 1e-4) << i;
}

TEST(Optimize, BudgetOfDimensionPlusTwo) {
  OptimizerSettings s;
  s.budget = 8;
  const auto start = box({1, 1, 1, 1, 1, 1});
  const auto r = optimize(quadratic, start, s);
  EXPECT_EQ(r.trace.size(), 8u);
  double best_simplex = INFINITY;
  for (int k = 0; k < 7; ++k) best_simplex = std::min(best_simplex, r.trace[k].cost);
  EXPECT_LE(r.best_cost, best_simplex);
  s.budget = 7;
  EXPECT_THROW(optimize(quadratic, start, s), ConfigError);
  s.budget = 0;
  EXPECT_THROW(optimize(quadratic, start, s), ConfigError);
}

TEST(Optimize, TraceIsMonotoneAndInsideBounds) {
  OptimizerSettings s;
  s.budget = 300;
  s.initial_step = 2.0;  // large enough to hit the bounds
  const auto start = box({0.2, 9.0, 1, 1, 1, 1});
  const auto r = optimize(quadratic, start, s);
  EXPECT_GT(r.projections, 0);
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    if (k > 0) {
      EXPECT_LE(r.trace[k].best, r.trace[k - 1].best);
    }
    for (std::size_t i = 0; i < start.size(); ++i) {
      EXPECT_GE(r.trace[k].params[i], start.entries[i].lower * (1 - 1e-12));
      EXPECT_LE(r.trace[k].params[i], start.entries[i].upper * (1 + 1e-12));
    }
  }
}

TEST(Optimize, SameSeedSameTrace) {
  OptimizerSettings s;
  s.budget = 200;
  const auto a = optimize(quadratic, box({2, 2, 2, 2, 2, 2}), s);
  const auto b = optimize(quadratic, box({2, 2, 2, 2, 2, 2}), s);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) EXPECT_EQ(a.trace[k].params, b.trace[k].params);
}

TEST(Optimize, ParallelTraceEqualsSerial) {
  OptimizerSettings s;
  s.budget = 200;
  const auto a = optimize(quadratic, box({2, 2, 2, 2, 2, 2}), s);
  s.jobs = 3;
  const auto b = optimize(quadratic, box({2, 2, 2, 2, 2, 2}), s);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(a.trace[k].params, b.trace[k].params);
    EXPECT_EQ(a.trace[k].cost, b.trace[k].cost);
  }
}

// Short scenarios keep the simulation-backed tests fast.
Objective short_objective(ContactVariant v, Axis axis) {
  Objective obj;
  obj.analysis.window_s = 3.0;
  Scenario sc;
  sc.axis = axis;
  sc.input.body = build_default_body(75.0, 1.75);
  sc.input.contact.variant = v;
  sc.input.run.duration = 12.0;
  ExcitationSpec ex;
  ex.axis = axis;
  sc.input.seat = scenario_seat_motion(ex, sc.input.run);
  sc.reference = analyse_trajectory(simulate(sc.input), axis, sc.input.run.settle, obj.analysis);
  for (const auto& ch : sc.reference.channels)
    if (ch.name.rfind("seat", 0) != 0) obj.weights[ch.name] = 1.0;
  obj.scenarios.push_back(sc);
  return obj;
}

TEST(Evaluate, SelfReferenceCostsNothing) {
  const Objective obj = short_objective(ContactVariant::mb_friction, Axis::vertical);
  const auto& sc = obj.scenarios[0];
  const auto truth = calibration_parameters(sc.input.body, sc.input.contact, gain_groups(), 10.0);
  EXPECT_LT(evaluate(truth, obj), 0.01);
  auto off = truth;
  for (auto& e : off.entries) e.value *= 1.5;
  EXPECT_GT(evaluate(off, obj), 0.1);
}

TEST(Evaluate, ZeroWeightsHideMismatchedChannels) {
  Objective obj = short_objective(ContactVariant::mb_shear, Axis::vertical);
  auto& ref = obj.scenarios[0].reference;
  for (auto& ch : ref.channels)
    if (ch.name == "head_az")
      for (auto& h : ch.h) h *= 3.0;
  const auto& in = obj.scenarios[0].input;
  const auto truth = calibration_parameters(in.body, in.contact, gain_groups(), 10.0);
  EXPECT_GT(evaluate(truth, obj), 9.0);  // 20 log10(3) dB on one channel
  obj.weights["head_az"] = 0.0;
  EXPECT_LT(evaluate(truth, obj), 0.01);
  for (auto& [ch, w] : obj.weights) w = 0.0;
  EXPECT_THROW(obj.validate(), ConfigError);
}

// Joint and restraint impedances are integrated implicitly, so no gain
// setting diverges, even at bounds 1e8 away from the defaults. A non-finite
// seat input forces the divergence instead.
TEST(Evaluate, DivergenceCostsThePenalty) {
  Objective obj = short_objective(ContactVariant::mb_shear, Axis::vertical);
  auto& in = obj.scenarios[0].input;
  const auto p = calibration_parameters(in.body, in.contact, gain_groups(), 10.0);
  in.seat.acceleration[7000] = std::numeric_limits<double>::infinity();
  EXPECT_EQ(evaluate(p, obj), kDivergencePenalty);
}

TEST(Evaluate, BandMismatchIsAConfigError) {
  Objective obj = short_objective(ContactVariant::mb_shear, Axis::vertical);
  obj.analysis.band_high = 10.0;
  EXPECT_THROW(obj.validate(), ConfigError);
}

TEST(Evaluate, ConcurrentEqualsSerial) {
  const Objective obj = short_objective(ContactVariant::mb_friction, Axis::lateral);
  const auto& in = obj.scenarios[0].input;
  const auto truth = calibration_parameters(in.body, in.contact, gain_groups(), 10.0);
  std::vector<ParameterVector> cands;
  for (double f : {0.8, 1.0, 1.3}) {
    auto p = truth;
    for (auto& e : p.entries) e.value *= f;
    cands.push_back(p);
  }
  auto run = [&](int jobs) { return parallel_map(cands.size(), jobs, [&](std::size_t i) { return evaluate(cands[i], obj); }); };
  EXPECT_EQ(run(1), run(3));
}

TEST(Parameters, GroupsAndRestraints) {
  const BodyModel body = build_default_body(75.0, 1.75);
  ContactConfig c;
  c.variant = ContactVariant::mb_shear;
  EXPECT_EQ(calibration_parameters(body, c, gain_groups(), 10.0).size(), 14u);
  c.variant = ContactVariant::mb_friction;
  EXPECT_EQ(calibration_parameters(body, c, gain_groups(), 10.0).size(), 12u);

  c.variant = ContactVariant::mb_shear;
  auto p = calibration_parameters(body, c, gain_groups(), 10.0);
  auto vals = p.values();
  for (double& v : vals) v *= 2.0;
  BodyModel b = body;
  ContactConfig cc = c;
  apply_parameters(p.with(vals), b, cc);
  EXPECT_EQ(group_gains(b).at("neck").stiffness, 2.0 * group_gains(body).at("neck").stiffness);
  for (const auto& r : cc.restraints) EXPECT_EQ(r.k_t, 2.0 * c.restraints[0].k_t);
}

}  // namespace
}  // namespace seatsim
