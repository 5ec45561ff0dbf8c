#include <random>

#include <gtest/gtest.h>

#include "seatsim/contact.hpp"

namespace seatsim {
namespace {

PlaneSurface floor_patch() {
  PlaneSurface s;
  s.extent = {10.0, 10.0};
  return s;
}

WorldEllipsoid sphere(const Vec3& c, double r) { return {c, Mat3::Identity(), Vec3::Constant(r)}; }

TEST(EllipsoidPlaneContact, ClearOfPlaneGivesNothing) {
  const NormalContact c = ellipsoid_plane_contact(sphere(Vec3(0, 0, 0.2), 0.1), Vec3::Zero(), Vec3::Zero(),
                                                  floor_patch(), NormalContactLaw{});
  EXPECT_FALSE(c.active);
  EXPECT_EQ(c.force, 0.0);
}

TEST(EllipsoidPlaneContact, LinearSphereCase) {
  const NormalContactLaw law{1e4, 1.0, 0.0, true};
  const NormalContact c =
      ellipsoid_plane_contact(sphere(Vec3(0, 0, 0.095), 0.1), Vec3::Zero(), Vec3::Zero(), floor_patch(), law);
  ASSERT_TRUE(c.active);
  EXPECT_NEAR(c.force, 50.0, 1e-9);
  EXPECT_NEAR((c.force_vector() - Vec3(0, 0, 50.0)).norm(), 0.0, 1e-9);
  EXPECT_NEAR((c.point - Vec3(0, 0, -0.005)).norm(), 0.0, 1e-15);
}

TEST(EllipsoidPlaneContact, NoAdhesionWhenSeparatingFast) {
  const NormalContactLaw law{1e4, 1.5, 1e6, false};
  const NormalContact c = ellipsoid_plane_contact(sphere(Vec3(0, 0, 0.099), 0.1), Vec3(0, 0, 5.0), Vec3::Zero(),
                                                  floor_patch(), law);
  EXPECT_GE(c.force, 0.0);
  EXPECT_EQ(c.force, 0.0);
}

// Oracle: minimize the plane distance over a dense parametric sampling of the
// surface, then refine with a local grid around the best sample.
double sampled_depth(const WorldEllipsoid& e, const PlaneSurface& p) {
  auto at = [&](double th, double ph) {
    const Vec3 local(e.semi_axes.x() * std::sin(th) * std::cos(ph), e.semi_axes.y() * std::sin(th) * std::sin(ph),
                     e.semi_axes.z() * std::cos(th));
    return p.signed_distance(e.center + e.rotation * local);
  };
  double best = INFINITY, bt = 0, bp = 0;
  const int n = 400;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j < 2 * n; ++j) {
      const double th = M_PI * i / n, ph = M_PI * j / n;
      const double d = at(th, ph);
      if (d < best) best = d, bt = th, bp = ph;
    }
  double step = M_PI / n;
  for (int round = 0; round < 40; ++round) {
    for (int i = -4; i <= 4; ++i)
      for (int j = -4; j <= 4; ++j) {
        const double th = bt + i * step / 4, ph = bp + j * step / 4;
        const double d = at(th, ph);
        if (d < best) best = d, bt = th, bp = ph;
      }
    step *= 0.5;
  }
  return -best;
}

TEST(EllipsoidPlaneContact, DepthMatchesSurfaceSampling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    PlaneSurface p = floor_patch();
    p.normal = Vec3(0.3 * u(rng), 0.3 * u(rng), 1.0).normalized();
    p.tangent = p.normal.cross(Vec3::UnitY()).cross(p.normal).normalized();
    const Vec3 axes(0.05 + 0.1 * std::abs(u(rng)), 0.05 + 0.1 * std::abs(u(rng)), 0.05 + 0.1 * std::abs(u(rng)));
    const Mat3 rot = Quat::UnitRandom().toRotationMatrix();
    WorldEllipsoid e{Vec3::Zero(), rot, axes};
    const Vec3 deepest = ellipsoid_support(e, -p.normal);
    e.center = -(deepest.dot(p.normal) + 0.03 * std::abs(u(rng)) + 1e-3) * p.normal;
    const NormalContact c = ellipsoid_plane_contact(e, Vec3::Zero(), Vec3::Zero(), p, NormalContactLaw{});
    ASSERT_TRUE(c.active);
    EXPECT_NEAR(c.depth, sampled_depth(e, p), 1e-6);
  }
}

TEST(FrictionForce, ZeroSlipGivesZero) {
  EXPECT_EQ(friction_force(100.0, Vec3::Zero(), FrictionLaw{1.2, 0.01}), Vec3::Zero());
}

TEST(FrictionForce, SaturatesAtMuTimesNormal) {
  const Vec3 f = friction_force(100.0, Vec3(3.0, 4.0, 0.0), FrictionLaw{1.2, 0.01});
  EXPECT_DOUBLE_EQ(f.norm(), 120.0);
  EXPECT_NEAR((f.normalized() + Vec3(0.6, 0.8, 0.0)).norm(), 0.0, 1e-15);
}

TEST(FrictionForce, FuzzConeAndDissipation) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const FrictionLaw law{1.2, 0.01};
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const double fn = 1000.0 * std::abs(u(rng));
    const Vec3 v = Vec3(u(rng), u(rng), u(rng)) * std::pow(10.0, 3.0 * u(rng) - 1.0);
    const Vec3 f = friction_force(fn, v, law);
    if (f.norm() > law.mu * fn || f.dot(v) > 0.0) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(FrictionForce, DampingIsTheVelocityJacobian) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const FrictionLaw law{1.0, 0.01};
  const Vec3 n = Vec3::UnitZ();
  for (int i = 0; i < 20; ++i) {
    const Vec3 v(0.02 * u(rng), 0.02 * u(rng), 0.0);
    const Mat3 d = friction_damping(50.0, v, n, law);
    for (int k = 0; k < 2; ++k) {
      const double h = 1e-7;
      const Vec3 dv = Vec3::Unit(k) * h;
      const Vec3 fd = (friction_force(50.0, v + dv, law) - friction_force(50.0, v - dv, law)) / (2 * h);
      EXPECT_NEAR((fd + d.col(k)).norm(), 0.0, 1e-4 * d.norm());
    }
  }
}

TEST(PointRestraintForce, Definitions) {
  PointRestraint r;
  r.normal = Vec3::UnitZ();
  r.k_t = 5000.0;
  EXPECT_EQ(point_restraint_force(r, Vec3::Zero(), Vec3::Zero(), Vec3::Zero()), Vec3::Zero());
  EXPECT_NEAR((point_restraint_force(r, Vec3(0.01, 0, 0), Vec3::Zero(), Vec3::Zero()) - Vec3(-50, 0, 0)).norm(), 0.0,
              1e-12);
  EXPECT_EQ(point_restraint_force(r, Vec3(0, 0, 0.02), Vec3(0, 0, 1.0), Vec3::Zero()).norm(), 0.0);
}

TEST(PointRestraintForce, NoNormalComponent) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    PointRestraint r;
    r.normal = Vec3(u(rng), u(rng), u(rng)).normalized();
    const Vec3 f = point_restraint_force(r, Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)),
                                         Vec3(u(rng), u(rng), u(rng)));
    EXPECT_LE(std::abs(f.dot(r.normal)), 1e-12 * f.norm());
  }
}

TEST(ContactConfig, RejectsStrongWeakSpringsAndUnknownVariant) {
  const BodyModel body = build_default_body(75.0, 1.75);
  ContactConfig cfg;
  cfg.weak_springs[0].k_w = 1200.0;
  try {
    cfg.validate(body);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "contact.weak_springs.k_w");
  }
  try {
    parse_variant("MbGlue");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "contact.variant");
  }
}

struct Settled {
  ContactOutput out;
  SystemState state;
};

Settled settle(ContactVariant variant, double seconds) {
  ContactConfig cfg;
  cfg.variant = variant;
  const Multibody mb(build_default_body(75.0, 1.75));
  SystemState s = mb.initial_state();
  const SeatGeometry g = default_seat_geometry(mb, s, cfg);
  ContactState cs = attach_contacts(cfg, g, mb, forward_kinematics(mb, s));
  const int n = static_cast<int>(seconds / 1e-3);
  ContactOutput out;
  for (int i = 0; i <= n; ++i) {
    const Kinematics kin = forward_kinematics(mb, s);
    if (i == n / 2) anchor_restraints(cs, mb, kin);
    out = assemble_contact_forces(cfg, g, mb, kin, cs);
    for (const auto& c : out.contacts) EXPECT_GE(c.normal.force, 0.0);
    EXPECT_LE(out.friction_cone_ratio(), 1.0 + 1e-12);
    if (i < n) s = step(mb, s, out.ext, out.impedances, Vec3::Zero(), 1e-3);
  }
  return {out, s};
}

TEST(AssembleContactForces, StaticForceBalance) {
  for (auto variant : {ContactVariant::mb_friction, ContactVariant::mb_shear}) {
    const Settled r = settle(variant, 10.0);
    EXPECT_NEAR(r.out.total_force().z() / (75.0 * 9.81), 1.0, 0.01) << variant_name(variant);
  }
}

TEST(AssembleContactForces, ShearBackrestTangentialLoadIsRestraintsOnly) {
  const Settled r = settle(ContactVariant::mb_shear, 6.0);
  EXPECT_EQ(r.out.friction_on("backrest"), Vec3::Zero());
  EXPECT_EQ(r.out.friction_on("pan"), Vec3::Zero());
  EXPECT_EQ(r.out.restraint_forces.size(), 5u);
  EXPECT_TRUE(r.out.weak_spring_forces.empty());
  // Everything in the backrest plane besides restraints is normal force, so
  // the tangential part of the total equals the restraint sum (pan friction-free).
  Vec3 normal_sum = Vec3::Zero();
  for (const auto& c : r.out.contacts) normal_sum += c.normal.force_vector();
  EXPECT_NEAR((r.out.total_force() - normal_sum - r.out.restraint_sum()).norm(), 0.0, 1e-9);
}

TEST(AssembleContactForces, FrictionVariantUsesWeakSprings) {
  const Settled r = settle(ContactVariant::mb_friction, 1.0);
  EXPECT_TRUE(r.out.restraint_forces.empty());
  EXPECT_EQ(r.out.weak_spring_forces.size(), 3u);
}

TEST(AssembleContactForces, FoamVariantNeedsFoam) {
  ContactConfig cfg;
  cfg.variant = ContactVariant::foam_fe;
  const Multibody mb(build_default_body(75.0, 1.75));
  const SystemState s = mb.initial_state();
  const SeatGeometry g = default_seat_geometry(mb, s, cfg);
  const Kinematics kin = forward_kinematics(mb, s);
  const ContactState cs = attach_contacts(cfg, g, mb, kin);
  EXPECT_THROW(assemble_contact_forces(cfg, g, mb, kin, cs, nullptr), ConfigError);
}

}  // namespace
}  // namespace seatsim
