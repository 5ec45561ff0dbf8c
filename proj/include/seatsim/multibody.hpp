#pragma once

// Reduced-coordinate kinematics for a BodyModel tree.
//
// Coordinates: a free root stores world position (3) and orientation quaternion
// (w, x, y, z); spherical joints store the child-relative quaternion; revolute
// joints store an angle. Velocities: the free root uses the world angular
// velocity followed by the world velocity of the whole system's centre of
// mass; spherical joints use the relative angular velocity in the child
// frame; revolute joints the angle rate.
//
// The centre-of-mass velocity decouples translation from the internal motion
// (the mass matrix becomes block diagonal in it), so linear momentum is a
// state variable. Internally the equations of motion are assembled in
// "origin" coordinates, where the root's translational rate is the velocity
// of the root origin; see origin_velocities().
//
// Spatial vectors are expressed in the world (seat) frame about the world
// origin, ordered (angular; linear).

#include <string>
#include <vector>

#include <Eigen/Core>

#include "seatsim/body_model.hpp"
#include "seatsim/errors.hpp"
#include "seatsim/rotation.hpp"

namespace seatsim {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline Vec6 motion_cross(const Vec6& a, const Vec6& b) {
  Vec6 r;
  r.head<3>() = a.head<3>().cross(b.head<3>());
  r.tail<3>() = a.head<3>().cross(b.tail<3>()) + a.tail<3>().cross(b.head<3>());
  return r;
}

inline Vec6 force_cross(const Vec6& a, const Vec6& f) {
  Vec6 r;
  r.head<3>() = a.head<3>().cross(f.head<3>()) + a.tail<3>().cross(f.tail<3>());
  r.tail<3>() = a.head<3>().cross(f.tail<3>());
  return r;
}

/// Spatial inertia about the world origin of a body with mass `m`, COM `c`
/// and COM inertia `ic`, all in world coordinates.
inline Mat6 spatial_inertia(double m, const Vec3& c, const Mat3& ic) {
  const Mat3 cx = skew(c);
  Mat6 out;
  out.topLeftCorner<3, 3>() = ic + m * cx * cx.transpose();
  out.topRightCorner<3, 3>() = m * cx;
  out.bottomLeftCorner<3, 3>() = m * cx.transpose();
  out.bottomRightCorner<3, 3>() = m * Mat3::Identity();
  return out;
}

struct SystemState {
  VecX q;
  VecX v;
  double t = 0.0;
};

/// Compiled, immutable view of a BodyModel: topological body order and the
/// coordinate layout.
class Multibody {
 public:
  enum class Kind { free_root, fixed_root, spherical, revolute };
  static constexpr std::size_t kMaxDepth = 64;

  struct Body {
    std::size_t segment = 0;
    int parent = -1;     // index into bodies(), -1 for the root
    int joint = -1;      // index into model().joints, -1 for the root
    Kind kind = Kind::free_root;
    int q_index = 0;
    int v_index = 0;
    int ndof = 0;
    Vec3 origin = Vec3::Zero();  // joint centre in the parent frame
    Vec3 axis = Vec3::UnitY();
    Vec3 rest = Vec3::Zero();
    Vec3 stiffness = Vec3::Zero();
    Vec3 damping = Vec3::Zero();
    double mass = 0.0;
    Vec3 com = Vec3::Zero();
    Mat3 inertia = Mat3::Zero();  // about COM, segment frame
  };

  explicit Multibody(BodyModel model) : model_(std::move(model)) {
    validate_tree(model_);
    const auto root = *model_.segment_index(model_.root);
    add_body(root, -1, -1);
    // Breadth-first so parents always precede children.
    for (std::size_t cursor = 0; cursor < bodies_.size(); ++cursor) {
      const std::string& name = model_.segments[bodies_[cursor].segment].name;
      for (std::size_t j = 0; j < model_.joints.size(); ++j)
        if (model_.joints[j].parent == name)
          add_body(*model_.segment_index(model_.joints[j].child), static_cast<int>(cursor), static_cast<int>(j));
    }
    if (bodies_.size() != model_.segments.size()) throw ValidationError("body.joints", "unreachable segments");
    body_of_segment_.assign(model_.segments.size(), -1);
    for (std::size_t b = 0; b < bodies_.size(); ++b) body_of_segment_[bodies_[b].segment] = static_cast<int>(b);
    for (std::size_t b = 0; b < bodies_.size(); ++b) {
      std::vector<int> chain;
      for (int a = static_cast<int>(b); a >= 0; a = bodies_[a].parent) chain.push_back(a);
      if (chain.size() > kMaxDepth) throw ValidationError("body.joints", "kinematic chain deeper than 64 segments");
      std::vector<int> dofs;
      for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        for (int k = 0; k < bodies_[*it].ndof; ++k) dofs.push_back(bodies_[*it].v_index + k);
      chain_dofs_.push_back(std::move(dofs));
    }
  }

  const BodyModel& model() const noexcept { return model_; }
  const std::vector<Body>& bodies() const noexcept { return bodies_; }
  int nq() const noexcept { return nq_; }
  int nv() const noexcept { return nv_; }
  int body_of_segment(std::size_t segment) const { return body_of_segment_.at(segment); }
  int body_of_segment(const std::string& name) const {
    const auto idx = model_.segment_index(name);
    if (!idx) throw LookupError("unknown segment '" + name + "'");
    return body_of_segment_[*idx];
  }
  /// Velocity indices that move body `b` (its joint and all ancestors).
  const std::vector<int>& chain_dofs(int b) const { return chain_dofs_.at(b); }

  /// Zero configuration: root at the model's placement, joints at rest.
  SystemState initial_state() const {
    SystemState s;
    s.q = VecX::Zero(nq_);
    s.v = VecX::Zero(nv_);
    for (const auto& b : bodies_) {
      switch (b.kind) {
        case Kind::free_root:
          s.q.segment<3>(b.q_index) = model_.root_position;
          set_quat(s.q, b.q_index + 3, model_.root_orientation);
          break;
        case Kind::fixed_root: break;
        case Kind::spherical: set_quat(s.q, b.q_index, quat_exp(b.rest)); break;
        case Kind::revolute: s.q[b.q_index] = b.rest.x(); break;
      }
    }
    return s;
  }

  std::string coordinate_name(int qi) const {
    for (const auto& b : bodies_) {
      const int width = b.kind == Kind::free_root ? 7 : (b.kind == Kind::spherical ? 4 : b.ndof);
      if (qi >= b.q_index && qi < b.q_index + width)
        return model_.segments[b.segment].name + ".q[" + std::to_string(qi - b.q_index) + "]";
    }
    return "q[" + std::to_string(qi) + "]";
  }
  std::string velocity_name(int vi) const {
    for (const auto& b : bodies_)
      if (vi >= b.v_index && vi < b.v_index + b.ndof)
        return model_.segments[b.segment].name + ".v[" + std::to_string(vi - b.v_index) + "]";
    return "v[" + std::to_string(vi) + "]";
  }

  static Quat get_quat(const VecX& q, int i) { return Quat(q[i], q[i + 1], q[i + 2], q[i + 3]); }
  static void set_quat(VecX& q, int i, const Quat& r) {
    q[i] = r.w();
    q[i + 1] = r.x();
    q[i + 2] = r.y();
    q[i + 3] = r.z();
  }

 private:
  void add_body(std::size_t segment, int parent, int joint) {
    Body b;
    b.segment = segment;
    b.parent = parent;
    b.joint = joint;
    const auto& seg = model_.segments[segment];
    b.mass = seg.mass;
    b.com = seg.com_offset;
    b.inertia = seg.inertia_tensor();
    b.q_index = nq_;
    b.v_index = nv_;
    if (joint < 0) {
      b.kind = model_.root_joint == RootJoint::free ? Kind::free_root : Kind::fixed_root;
      b.ndof = b.kind == Kind::free_root ? 6 : 0;
      nq_ += b.kind == Kind::free_root ? 7 : 0;
    } else {
      const auto& js = model_.joints[joint];
      b.origin = js.origin;
      b.axis = js.axis;
      b.rest = js.rest_angles;
      b.stiffness = js.stiffness;
      b.damping = js.damping;
      b.kind = js.type == JointType::spherical ? Kind::spherical : Kind::revolute;
      b.ndof = js.dof();
      nq_ += js.type == JointType::spherical ? 4 : 1;
    }
    nv_ += b.ndof;
    bodies_.push_back(b);
  }

  BodyModel model_;
  std::vector<Body> bodies_;
  std::vector<int> body_of_segment_;
  std::vector<std::vector<int>> chain_dofs_;
  int nq_ = 0;
  int nv_ = 0;
};

/// World pose and velocity of every body for one state.
struct Kinematics {
  struct Frame {
    Mat3 rotation = Mat3::Identity();  // segment -> world
    Vec3 origin = Vec3::Zero();
    Vec3 com = Vec3::Zero();
    Vec6 velocity = Vec6::Zero();  // spatial, about world origin
    Eigen::Matrix<double, 6, 6> subspace = Eigen::Matrix<double, 6, 6>::Zero();  // joint columns (first ndof)
    Vec6 joint_velocity = Vec6::Zero();  // subspace * qdot_i
  };
  std::vector<Frame> frames;
  Vec3 root_origin_velocity = Vec3::Zero();  // free root only
  double total_mass = 0.0;

  Vec3 point(int body, const Vec3& local) const {
    return frames[body].origin + frames[body].rotation * local;
  }
  Vec3 point_velocity(int body, const Vec3& world_point) const {
    const Vec6& vel = frames[body].velocity;
    return vel.tail<3>() + vel.head<3>().cross(world_point);
  }
  Vec3 angular_velocity(int body) const { return frames[body].velocity.head<3>(); }
};

inline Kinematics forward_kinematics(const Multibody& mb, const SystemState& state) {
  using Kind = Multibody::Kind;
  const auto& bodies = mb.bodies();
  Kinematics kin;
  kin.frames.resize(bodies.size());
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const auto& b = bodies[i];
    auto& f = kin.frames[i];
    const auto* parent = b.parent >= 0 ? &kin.frames[b.parent] : nullptr;
    switch (b.kind) {
      case Kind::free_root: {
        f.origin = state.q.segment<3>(b.q_index);
        f.rotation = Multibody::get_quat(state.q, b.q_index + 3).normalized().toRotationMatrix();
        for (int k = 0; k < 3; ++k) {
          const Vec3 e = Vec3::Unit(k);
          f.subspace.col(k) << e, f.origin.cross(e);
          f.subspace.col(3 + k) << Vec3::Zero(), e;
        }
        break;
      }
      case Kind::fixed_root:
        f.origin = mb.model().root_position;
        f.rotation = mb.model().root_orientation.toRotationMatrix();
        break;
      case Kind::spherical:
      case Kind::revolute: {
        const Mat3 rel = b.kind == Kind::spherical
                             ? Multibody::get_quat(state.q, b.q_index).normalized().toRotationMatrix()
                             : Eigen::AngleAxisd(state.q[b.q_index], b.axis).toRotationMatrix();
        f.origin = parent->origin + parent->rotation * b.origin;
        f.rotation = parent->rotation * rel;
        for (int k = 0; k < b.ndof; ++k) {
          const Vec3 a = b.kind == Kind::spherical ? Vec3(f.rotation.col(k)) : Vec3(f.rotation * b.axis);
          f.subspace.col(k) << a, f.origin.cross(a);
        }
        break;
      }
    }
    f.com = f.origin + f.rotation * b.com;
    Vec6 vj = Vec6::Zero();
    // Free-root translation is added after the loop.
    const int rotational = b.kind == Kind::free_root ? 3 : b.ndof;
    for (int k = 0; k < rotational; ++k)
      vj += f.subspace.col(k) * state.v[b.v_index + k];
    f.joint_velocity = vj;
    f.velocity = (parent ? parent->velocity : Vec6::Zero()) + vj;
    kin.total_mass += b.mass;
  }
  // Velocities so far assume a stationary root origin; shift everything by
  // the origin velocity that reproduces the stored centre-of-mass velocity.
  if (!bodies.empty() && bodies[0].kind == Kind::free_root) {
    Vec3 momentum = Vec3::Zero();
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      const Vec6& vel = kin.frames[i].velocity;
      momentum += bodies[i].mass * (vel.tail<3>() + vel.head<3>().cross(kin.frames[i].com));
    }
    const Vec3 v_origin = state.v.segment<3>(bodies[0].v_index + 3) - momentum / kin.total_mass;
    kin.root_origin_velocity = v_origin;
    for (auto& f : kin.frames) f.velocity.tail<3>() += v_origin;
    kin.frames[0].joint_velocity.tail<3>() += v_origin;
  }
  return kin;
}

/// Generalized velocities in origin coordinates (root translational rate =
/// velocity of the root origin). Identical to state.v for non-free roots.
inline VecX origin_velocities(const Multibody& mb, const SystemState& state, const Kinematics& kin) {
  VecX v = state.v;
  if (!mb.bodies().empty() && mb.bodies()[0].kind == Multibody::Kind::free_root)
    v.segment<3>(mb.bodies()[0].v_index + 3) = kin.root_origin_velocity;
  return v;
}

/// Linear velocity Jacobian (origin coordinates) of a world point attached to body `b`, restricted
/// to the body's chain DOFs (columns ordered as mb.chain_dofs(b)).
inline Eigen::Matrix<double, 3, Eigen::Dynamic> point_jacobian_chain(const Multibody& mb, const Kinematics& kin,
                                                                     int b, const Vec3& x) {
  const auto& dofs = mb.chain_dofs(b);
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac(3, static_cast<int>(dofs.size()));
  int chain[Multibody::kMaxDepth];
  int depth = 0;
  for (int a = b; a >= 0; a = mb.bodies()[a].parent) chain[depth++] = a;
  int col = 0;
  for (int d = depth - 1; d >= 0; --d) {
    const auto& body = mb.bodies()[chain[d]];
    const auto& f = kin.frames[chain[d]];
    for (int k = 0; k < body.ndof; ++k) {
      const auto s = f.subspace.col(k);
      jac.col(col++) = s.tail<3>() + s.head<3>().cross(x);
    }
  }
  return jac;
}

/// Full-width (3 x nv) point Jacobian.
inline Eigen::Matrix<double, 3, Eigen::Dynamic> point_jacobian(const Multibody& mb, const Kinematics& kin, int b,
                                                               const Vec3& x) {
  const auto chain = point_jacobian_chain(mb, kin, b, x);
  Eigen::Matrix<double, 3, Eigen::Dynamic> full = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, mb.nv());
  const auto& dofs = mb.chain_dofs(b);
  for (std::size_t c = 0; c < dofs.size(); ++c) full.col(dofs[c]) = chain.col(static_cast<int>(c));
  return full;
}

/// World position of a named marker.
inline Vec3 marker_world_position(const Multibody& mb, const SystemState& state, const std::string& marker) {
  const Marker& m = mb.model().marker(marker);
  if (state.q.size() != mb.nq()) throw ValidationError("state.q", "dimension does not match the model");
  const auto kin = forward_kinematics(mb, state);
  return kin.point(mb.body_of_segment(m.segment), m.local);
}

}  // namespace seatsim
