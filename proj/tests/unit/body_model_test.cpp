#include <random>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "seatsim/body_model.hpp"
#include "seatsim/multibody.hpp"

namespace seatsim {
namespace {

TEST(BuildDefaultBody, TwelveSegmentsAndExactMass) {
  const BodyModel body = build_default_body(75.0, 1.75);
  EXPECT_EQ(body.segments.size(), 12u);
  EXPECT_NEAR(body.total_mass(), 75.0, 75.0 * 1e-9);
}

TEST(BuildDefaultBody, MassFractionsFollowTable) {
  for (double mass : {45.0, 75.0, 118.0}) {
    const BodyModel body = build_default_body(mass, 1.80);
    for (const auto& row : kAnthropometry) {
      const auto idx = body.segment_index(row.segment);
      ASSERT_TRUE(idx.has_value()) << row.segment;
      EXPECT_NEAR(body.segments[*idx].mass / (row.mass_fraction * mass), 1.0, 1e-6) << row.segment;
    }
  }
  // de Leva head+neck fraction for males is 6.94 %.
  const BodyModel body = build_default_body(75.0, 1.75);
  EXPECT_NEAR(body.segments[*body.segment_index("head")].mass, 0.0694 * 75.0, 1e-12);
}

TEST(BuildDefaultBody, RejectsOutOfRangeInputs) {
  try {
    build_default_body(30.0, 1.75);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "total_mass");
  }
  try {
    build_default_body(75.0, 2.5);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "stature");
  }
}

TEST(BuildDefaultBody, SegmentInvariantsHold) {
  const BodyModel body = build_default_body(90.0, 1.9);
  for (const auto& s : body.segments) {
    const Vec3 i = s.principal_inertia;
    EXPECT_GT(s.mass, 0.0);
    EXPECT_GT(i.minCoeff(), 0.0);
    EXPECT_LE(i.x(), i.y() + i.z());
    EXPECT_LE(i.y(), i.x() + i.z());
    EXPECT_LE(i.z(), i.x() + i.y());
    EXPECT_GT(s.contact_ellipsoid.semi_axes.minCoeff(), 0.0);
  }
  for (const auto& j : body.joints) {
    EXPECT_GE(j.stiffness.minCoeff(), 0.0);
    EXPECT_GE(j.damping.minCoeff(), 0.0);
  }
  EXPECT_NO_THROW(validate_occupant(body));
}

TEST(ValidateTree, DetectsBrokenTopology) {
  BodyModel body = build_default_body(75.0, 1.75);
  BodyModel dup = body;
  dup.joints.push_back(dup.joints[0]);  // lumbar gets a second parent
  EXPECT_THROW(validate_tree(dup), ValidationError);

  BodyModel orphan = body;
  orphan.joints.erase(orphan.joints.begin() + 2);  // neck disconnected
  EXPECT_THROW(validate_tree(orphan), ValidationError);

  BodyModel bad_marker = body;
  bad_marker.markers.push_back({"x", "tail", Vec3::Zero()});
  EXPECT_THROW(validate_tree(bad_marker), ValidationError);

  BodyModel cyc = body;
  // Re-parent the lumbar under the head: lumbar->thoracic->neck->head->lumbar.
  cyc.joints[0].parent = "head";
  EXPECT_THROW(validate_tree(cyc), ValidationError);

  BodyModel bad_inertia = body;
  bad_inertia.segments[3].principal_inertia = Vec3(1.0, 0.1, 0.1);
  EXPECT_THROW(validate_tree(bad_inertia), ValidationError);

  BodyModel eleven = body;
  eleven.segments.pop_back();
  eleven.joints.pop_back();
  EXPECT_NO_THROW(validate_tree(eleven));
  EXPECT_THROW(validate_occupant(eleven), ValidationError);
}

TEST(MarkerWorldPosition, IdentityPoseAndRotatedPelvis) {
  BodyModel body = build_default_body(75.0, 1.75);
  body.markers.push_back({"pelvis_origin", "pelvis", Vec3::Zero()});
  body.markers.push_back({"pelvis_x", "pelvis", Vec3::UnitX()});
  body.root_position = Vec3(0.2, -0.1, 0.5);
  const Multibody mb(body);
  SystemState s = mb.initial_state();
  EXPECT_TRUE(marker_world_position(mb, s, "pelvis_origin").isApprox(body.root_position, 1e-15));

  Multibody::set_quat(s.q, 3, Quat(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ())));
  const Vec3 offset = marker_world_position(mb, s, "pelvis_x") - marker_world_position(mb, s, "pelvis_origin");
  EXPECT_NEAR((offset - Vec3(0.0, 1.0, 0.0)).norm(), 0.0, 1e-12);

  EXPECT_THROW(marker_world_position(mb, s, "nose"), LookupError);
}

// Independent oracle: compose 4x4 homogeneous transforms joint by joint,
// walking from the requested segment up to the root.
Eigen::Affine3d segment_pose_oracle(const BodyModel& body, const SystemState& s, const Multibody& mb,
                                    const std::string& segment) {
  if (segment == body.root) {
    Eigen::Affine3d t = Eigen::Affine3d::Identity();
    t.translate(Vec3(s.q[0], s.q[1], s.q[2]));
    t.rotate(Quat(s.q[3], s.q[4], s.q[5], s.q[6]).normalized());
    return t;
  }
  for (const auto& j : body.joints) {
    if (j.child != segment) continue;
    const auto& b = mb.bodies()[mb.body_of_segment(segment)];
    Eigen::Affine3d local = Eigen::Affine3d::Identity();
    local.translate(j.origin);
    if (j.type == JointType::spherical) {
      local.rotate(Quat(s.q[b.q_index], s.q[b.q_index + 1], s.q[b.q_index + 2], s.q[b.q_index + 3]).normalized());
    } else {
      local.rotate(Eigen::AngleAxisd(s.q[b.q_index], j.axis));
    }
    return segment_pose_oracle(body, s, mb, j.parent) * local;
  }
  throw std::logic_error("segment not found");
}

SystemState random_state(const Multibody& mb, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SystemState s = mb.initial_state();
  for (const auto& b : mb.bodies()) {
    if (b.kind == Multibody::Kind::free_root) {
      s.q.segment<3>(b.q_index) = Vec3(u(rng), u(rng), u(rng));
      Multibody::set_quat(s.q, b.q_index + 3, Quat::UnitRandom());
    } else if (b.kind == Multibody::Kind::spherical) {
      Multibody::set_quat(s.q, b.q_index, quat_exp(Vec3(u(rng), u(rng), u(rng))));
    } else if (b.kind == Multibody::Kind::revolute) {
      s.q[b.q_index] = 2.0 * u(rng);
    }
  }
  for (int i = 0; i < s.v.size(); ++i) s.v[i] = u(rng);
  return s;
}

TEST(MarkerWorldPosition, MatchesHomogeneousTransformChain) {
  const BodyModel body = build_default_body(80.0, 1.82);
  const Multibody mb(body);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const SystemState s = random_state(mb, rng);
    for (const auto& m : body.markers) {
      const Vec3 expected = segment_pose_oracle(body, s, mb, m.segment) * m.local;
      EXPECT_LT((marker_world_position(mb, s, m.name) - expected).norm(), 1e-12) << m.name;
    }
  }
}

// Same pose described from another root: start from the head's world pose
// and walk the tree outwards using relative joint transforms (inverted when
// walking from child to parent). Marker world points must agree.
TEST(MarkerWorldPosition, InvariantUnderReRooting) {
  const BodyModel body = build_default_body(70.0, 1.70);
  const Multibody mb(body);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const SystemState s = random_state(mb, rng);
    std::map<std::string, Eigen::Affine3d> pose;
    pose["head"] = segment_pose_oracle(body, s, mb, "head");
    bool grew = true;
    while (grew) {
      grew = false;
      for (const auto& j : body.joints) {
        const auto& b = mb.bodies()[mb.body_of_segment(j.child)];
        Eigen::Affine3d rel = Eigen::Affine3d::Identity();
        rel.translate(j.origin);
        if (j.type == JointType::spherical)
          rel.rotate(Quat(s.q[b.q_index], s.q[b.q_index + 1], s.q[b.q_index + 2], s.q[b.q_index + 3]).normalized());
        else
          rel.rotate(Eigen::AngleAxisd(s.q[b.q_index], j.axis));
        if (pose.count(j.parent) && !pose.count(j.child)) {
          pose[j.child] = pose[j.parent] * rel;
          grew = true;
        } else if (pose.count(j.child) && !pose.count(j.parent)) {
          pose[j.parent] = pose[j.child] * rel.inverse();
          grew = true;
        }
      }
    }
    ASSERT_EQ(pose.size(), body.segments.size());
    for (const auto& m : body.markers)
      EXPECT_LT((marker_world_position(mb, s, m.name) - pose[m.segment] * m.local).norm(), 1e-9) << m.name;
  }
}

}  // namespace
}  // namespace seatsim
