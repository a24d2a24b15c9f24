#include "softquad/rigid_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>

#include "softquad/error.hpp"

namespace softquad {

namespace {

Mat3 rod_inertia(double mass, double length, double radius) {
  const double transverse = mass * (3.0 * radius * radius + length * length) / 12.0;
  return Vec3(transverse, transverse, 0.5 * mass * radius * radius).asDiagonal();
}

Vec3 joint_axis(JointType t) {
  switch (t) {
    case JointType::RevoluteX: return Vec3::UnitX();
    case JointType::RevoluteY: return Vec3::UnitY();
    case JointType::PrismaticZ: return Vec3::UnitZ();
  }
  return Vec3::UnitZ();
}

bool is_spd(const Mat3& m) {
  if (!m.isApprox(m.transpose(), 1e-12)) return false;
  Eigen::LLT<Mat3> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace

void validate(const RobotModel& model) {
  if (!(model.body_mass > 0.0)) throw ModelError("body mass must be positive");
  if (!is_spd(model.body_inertia)) throw ModelError("body inertia must be symmetric positive definite");
  if (std::abs(model.ground.normal.norm() - 1.0) > 1e-9) throw ModelError("ground normal must have unit norm");
  for (int i = 0; i < kNumLegs; ++i) {
    const LegModel& leg = model.legs[i];
    const std::string tag = "leg " + std::to_string(i) + ": ";
    if (leg.n_segments < kMinSegments || leg.n_segments > kMaxSegments)
      throw ModelError(tag + "segment count " + std::to_string(leg.n_segments) + " outside [5, 7]");
    if (!(leg.mass > 0.0) || !(leg.cup_mass > 0.0)) throw ModelError(tag + "masses must be positive");
    if (!(leg.length > 0.0) || !(leg.cup_length > 0.0)) throw ModelError(tag + "lengths must be positive");
    for (int t = 0; t < kJointTypes; ++t) {
      if (!(leg.base_stiffness[t] > 0.0) || !(leg.base_damping[t] > 0.0))
        throw ModelError(tag + "base stiffness and damping must be positive");
      if (!(leg.alpha_expand[t] > 0.0 && leg.alpha_expand[t] <= 1.0) ||
          !(leg.alpha_contract[t] > 0.0 && leg.alpha_contract[t] <= 1.0))
        throw ModelError(tag + "hysteresis coefficients must lie in (0, 1]");
    }
    if (!(leg.chamber_area > 0.0) || !(leg.chamber_radius > 0.0))
      throw ModelError(tag + "chamber geometry must be positive");
    if (!(leg.cup_stiffness > 0.0) || !(leg.cup_damping > 0.0))
      throw ModelError(tag + "cup joint gains must be positive");
  }
}

RobotModel default_robot_model() {
  RobotModel m;
  const Vec3 h = m.body_half_extents;
  m.body_inertia = Vec3(m.body_mass / 3.0 * (h.y() * h.y() + h.z() * h.z()),
                        m.body_mass / 3.0 * (h.x() * h.x() + h.z() * h.z()),
                        m.body_mass / 3.0 * (h.x() * h.x() + h.y() * h.y()))
                       .asDiagonal();
  const Mat3 down = Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitX()).toRotationMatrix();
  const double mx = 0.065, my = 0.05;
  const std::array<Vec3, kNumLegs> mounts{Vec3(mx, my, -h.z()), Vec3(mx, -my, -h.z()),
                                          Vec3(-mx, my, -h.z()), Vec3(-mx, -my, -h.z())};
  for (int i = 0; i < kNumLegs; ++i) {
    m.legs[i].mount_position = mounts[i];
    m.legs[i].mount_rotation = down;
  }
  return m;
}

double TreeDescription::total_mass() const {
  double m = base_mass;
  for (const auto& l : links) m += l.mass;
  return m;
}

TreeDescription build_tree(const RobotModel& model) {
  validate(model);
  TreeDescription tree;
  tree.floating_base = true;
  tree.base_mass = model.body_mass;
  tree.base_inertia = model.body_inertia;
  tree.gravity = model.gravity;
  tree.links.reserve(model.joint_count());
  for (const LegModel& leg : model.legs) {
    LegLayout layout;
    layout.first_joint = tree.dof();
    layout.n_segments = leg.n_segments;
    layout.cup_length = leg.cup_length;
    const double seg_len = leg.segment_length();
    const double seg_mass = leg.segment_mass();
    int parent = -1;
    for (int s = 0; s < leg.n_segments; ++s) {
      Link rx;
      rx.parent = parent;
      rx.joint = JointType::RevoluteX;
      if (s == 0) {
        rx.offset = leg.mount_position;
        rx.rotation = leg.mount_rotation;
      } else {
        rx.offset = Vec3(0.0, 0.0, seg_len);
      }
      tree.links.push_back(rx);

      Link ry;
      ry.parent = tree.dof() - 1;
      ry.joint = JointType::RevoluteY;
      tree.links.push_back(ry);

      Link pz;
      pz.parent = tree.dof() - 1;
      pz.joint = JointType::PrismaticZ;
      pz.mass = seg_mass;
      pz.com = Vec3(0.0, 0.0, 0.5 * seg_len);
      pz.inertia = rod_inertia(seg_mass, seg_len, 0.008);
      tree.links.push_back(pz);
      parent = tree.dof() - 1;
    }
    Link cup;
    cup.parent = parent;
    cup.joint = JointType::PrismaticZ;
    cup.offset = Vec3(0.0, 0.0, seg_len);
    cup.mass = leg.cup_mass;
    cup.com = Vec3(0.0, 0.0, 0.5 * leg.cup_length);
    cup.inertia = rod_inertia(leg.cup_mass, leg.cup_length, 0.01);
    layout.cup_joint = tree.dof();
    tree.links.push_back(cup);
    tree.legs.push_back(layout);
  }
  return tree;
}

VecX JointDrive::explicit_torque(const TreeState& s) const {
  return torque + stiffness.cwiseProduct(target - s.q) - damping.cwiseProduct(s.qd);
}

Vec6 base_spatial_velocity(const TreeState& s) {
  const Vec3& w = s.base_angular_velocity;
  return make_spatial(w, s.base_linear_velocity - w.cross(s.base_position));
}

Kinematics forward_kinematics(const TreeDescription& tree, const TreeState& state) {
  const int n = tree.dof();
  Kinematics kin;
  kin.rotation.resize(n + 1);
  kin.position.resize(n + 1);
  kin.motion_subspace.resize(n);
  kin.velocity.resize(n + 1);
  kin.rotation[0] = state.base_orientation.toRotationMatrix();
  kin.position[0] = state.base_position;
  kin.velocity[0] = tree.floating_base ? base_spatial_velocity(state) : Vec6::Zero();
  for (int i = 0; i < n; ++i) {
    const Link& link = tree.links[i];
    const int p = link.parent + 1;
    const Mat3 frame = kin.rotation[p] * link.rotation;
    const Vec3 origin = kin.position[p] + kin.rotation[p] * link.offset;
    const Vec3 axis = frame * joint_axis(link.joint);
    if (link.joint == JointType::PrismaticZ) {
      kin.rotation[i + 1] = frame;
      kin.position[i + 1] = origin + axis * state.q[i];
      kin.motion_subspace[i] = make_spatial(Vec3::Zero(), axis);
    } else {
      kin.rotation[i + 1] = frame * Eigen::AngleAxisd(state.q[i], joint_axis(link.joint)).toRotationMatrix();
      kin.position[i + 1] = origin;
      kin.motion_subspace[i] = make_spatial(axis, origin.cross(axis));
    }
    kin.velocity[i + 1] = kin.velocity[p] + kin.motion_subspace[i] * state.qd[i];
  }
  return kin;
}

void add_point_force(Wrenches& w, int body, const Vec3& point, const Vec3& force) {
  w[body] += point_wrench(point, force);
}

std::vector<Mat6> body_inertias(const TreeDescription& tree, const Kinematics& kin) {
  std::vector<Mat6> out(tree.dof() + 1);
  const Mat3& r0 = kin.rotation[0];
  out[0] = spatial_inertia(tree.base_mass, kin.position[0], r0 * tree.base_inertia * r0.transpose());
  for (int i = 0; i < tree.dof(); ++i) {
    const Link& l = tree.links[i];
    if (l.mass == 0.0) {
      out[i + 1].setZero();
      continue;
    }
    const Mat3& r = kin.rotation[i + 1];
    out[i + 1] = spatial_inertia(l.mass, kin.position[i + 1] + r * l.com, r * l.inertia * r.transpose());
  }
  return out;
}

Vec3 center_of_mass(const TreeDescription& tree, const Kinematics& kin) {
  Vec3 acc = tree.base_mass * kin.position[0];
  for (int i = 0; i < tree.dof(); ++i) {
    const Link& l = tree.links[i];
    acc += l.mass * (kin.position[i + 1] + kin.rotation[i + 1] * l.com);
  }
  return acc / tree.total_mass();
}

Vec3 linear_momentum(const TreeDescription& tree, const TreeState& state) {
  const Kinematics kin = forward_kinematics(tree, state);
  Vec3 p = tree.base_mass * kin.point_velocity(0, kin.position[0]);
  for (int i = 0; i < tree.dof(); ++i) {
    const Link& l = tree.links[i];
    if (l.mass == 0.0) continue;
    p += l.mass * kin.point_velocity(i + 1, kin.position[i + 1] + kin.rotation[i + 1] * l.com);
  }
  return p;
}

TreeDynamics::TreeDynamics(TreeDescription tree) : tree_(std::move(tree)) {
  const int n = tree_.dof() + 1;
  inertia_.resize(n);
  articulated_.resize(n);
  bias_.resize(n);
  coriolis_.resize(n);
  u_vec_.resize(n);
  accel_.resize(n);
  d_inv_.resize(n);
  u_.resize(n);
  wrench_scratch_.assign(n, Vec6::Zero());
}

Accelerations TreeDynamics::forward_dynamics(const TreeState& state, const JointDrive& drive,
                                             const Wrenches& external, double implicit_dt) {
  const int n = tree_.dof();
  if (state.q.size() != n || state.qd.size() != n || drive.torque.size() != n)
    throw ModelError("forward_dynamics: vector length does not match joint count");
  if (static_cast<int>(external.size()) != n + 1)
    throw ModelError("forward_dynamics: need one wrench per body");
  kin_ = forward_kinematics(tree_, state);
  return articulated_dynamics(state, drive, external, implicit_dt);
}

Accelerations TreeDynamics::articulated_dynamics(const TreeState& state, const JointDrive& drive,
                                                 const Wrenches& external, double implicit_dt) {
  const int n = tree_.dof();
  const Vec6 gravity_accel = make_spatial(Vec3::Zero(), tree_.gravity);
  const double h = implicit_dt;

  // Root-to-leaf: inertias, velocities, velocity-product terms.
  {
    const Mat3& r0 = kin_.rotation[0];
    inertia_[0] = spatial_inertia(tree_.base_mass, kin_.position[0], r0 * tree_.base_inertia * r0.transpose());
    const Vec6& v0 = kin_.velocity[0];
    articulated_[0] = inertia_[0];
    bias_[0] = cross_force(v0, inertia_[0] * v0) - inertia_[0] * gravity_accel - external[0];
  }
  for (int i = 0; i < n; ++i) {
    const Link& l = tree_.links[i];
    const int b = i + 1;
    const Vec6& v = kin_.velocity[b];
    if (l.mass == 0.0) {
      inertia_[b].setZero();
      bias_[b] = -external[b];
    } else {
      const Mat3& r = kin_.rotation[b];
      inertia_[b] = spatial_inertia(l.mass, kin_.position[b] + r * l.com, r * l.inertia * r.transpose());
      bias_[b] = cross_force(v, inertia_[b] * v) - inertia_[b] * gravity_accel - external[b];
    }
    articulated_[b] = inertia_[b];
    coriolis_[b] = cross_motion(v, kin_.motion_subspace[i] * state.qd[i]);
  }

  // Leaf-to-root: articulated inertias.
  for (int i = n - 1; i >= 0; --i) {
    const int b = i + 1;
    const int p = tree_.links[i].parent + 1;
    const Vec6& s = kin_.motion_subspace[i];
    const double kp = drive.stiffness[i];
    const double kd = drive.damping[i];
    const double q_end = state.q[i] + 0.5 * h * state.qd[i];
    const double tau = drive.torque[i] + kp * (drive.target[i] - q_end) - kd * state.qd[i];
    const double armature = h * kd + 0.5 * h * h * kp;
    u_vec_[b] = articulated_[b] * s;
    const double d = s.dot(u_vec_[b]) + armature;
    d_inv_[b] = 1.0 / d;
    u_[b] = tau - s.dot(bias_[b]);
    const Mat6 ia = articulated_[b] - d_inv_[b] * u_vec_[b] * u_vec_[b].transpose();
    const Vec6 pa = bias_[b] + ia * coriolis_[b] + u_vec_[b] * (d_inv_[b] * u_[b]);
    articulated_[p] += ia;
    bias_[p] += pa;
  }

  Accelerations acc;
  acc.qdd.resize(n);
  if (tree_.floating_base) {
    acc.base = -articulated_[0].ldlt().solve(bias_[0]);
  } else {
    acc.base.setZero();
  }
  accel_[0] = acc.base;
  for (int i = 0; i < n; ++i) {
    const int b = i + 1;
    const int p = tree_.links[i].parent + 1;
    const Vec6 a = accel_[p] + coriolis_[b];
    const double qdd = d_inv_[b] * (u_[b] - u_vec_[b].dot(a));
    acc.qdd[i] = qdd;
    accel_[b] = a + kin_.motion_subspace[i] * qdd;
  }
  return acc;
}

namespace {

void drift(TreeState& s, double h, bool floating) {
  s.q += h * s.qd;
  if (floating) {
    // Hold the spatial velocity fixed: the origin velocity turns with the body.
    const Vec3 w = s.base_angular_velocity;
    const Vec3 step = h * s.base_linear_velocity;
    s.base_position += step;
    s.base_linear_velocity += w.cross(step);
    s.base_orientation = (exp_map(h * s.base_angular_velocity) * s.base_orientation).normalized();
  }
}

void check_finite(const TreeState& s) {
  for (Eigen::Index i = 0; i < s.q.size(); ++i) {
    if (!std::isfinite(s.q[i]) || !std::isfinite(s.qd[i]))
      throw IntegrationError("non-finite state at joint " + std::to_string(i), static_cast<int>(i));
  }
  if (!s.base_position.allFinite() || !s.base_linear_velocity.allFinite() ||
      !s.base_angular_velocity.allFinite() || !s.base_orientation.coeffs().allFinite())
    throw IntegrationError("non-finite base state", -1);
}

}  // namespace

TreeState TreeDynamics::step(const TreeState& state, const JointDrive& drive, const WrenchProvider& provider,
                             double dt) {
  if (!(dt > 0.0)) throw ModelError("step: dt must be positive");
  check_finite(state);
  TreeState mid = state;
  drift(mid, 0.5 * dt, tree_.floating_base);
  for (auto& w : wrench_scratch_) w.setZero();
  if (mid.q.size() != tree_.dof() || mid.qd.size() != tree_.dof() || drive.torque.size() != tree_.dof())
    throw ModelError("step: vector length does not match joint count");
  kin_ = forward_kinematics(tree_, mid);
  if (provider) provider(mid, kin_, wrench_scratch_);
  const Accelerations acc = articulated_dynamics(mid, drive, wrench_scratch_, dt);

  mid.qd += dt * acc.qdd;
  if (tree_.floating_base) {
    Vec6 v = base_spatial_velocity(mid) + dt * acc.base;
    mid.base_angular_velocity = angular(v);
    mid.base_linear_velocity = linear(v) + angular(v).cross(mid.base_position);
  }
  drift(mid, 0.5 * dt, tree_.floating_base);
  mid.time = state.time + dt;
  check_finite(mid);
  return mid;
}

TreeState step_dynamics(const TreeDescription& tree, const TreeState& state, const JointDrive& drive,
                        const Wrenches& external, double dt) {
  TreeDynamics dyn(tree);
  return dyn.step(state, drive, [&](const TreeState&, const Kinematics&, Wrenches& w) { w = external; }, dt);
}

std::array<double, 3> euler_zyx(const Mat3& r) {
  const double s = std::clamp(-r(2, 0), -1.0, 1.0);
  const double pitch = std::asin(s);
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

BodyPose body_kinematics(const TreeState& state, const Plane& ground, const Vec3& travel_axis,
                         const Vec3& gravity, const Vec3& prev_linear_velocity, double fd_dt) {
  BodyPose pose;
  const Mat3 r = state.base_orientation.toRotationMatrix();
  const auto [roll, pitch, yaw] = euler_zyx(r);
  pose.roll = roll;
  pose.pitch = pitch;
  pose.yaw = yaw;
  pose.near_gimbal_lock = std::abs(pitch) > 89.0 * std::numbers::pi / 180.0;
  pose.x_bar = travel_axis.dot(state.base_position - ground.point);
  pose.z = ground.signed_distance(state.base_position);
  pose.omega_body = r.transpose() * state.base_angular_velocity;
  const Vec3 accel = fd_dt > 0.0 ? Vec3((state.base_linear_velocity - prev_linear_velocity) / fd_dt) : Vec3::Zero();
  pose.linear_accel = r.transpose() * (accel - gravity);
  return pose;
}

Vec3 cup_rim_offset(const TreeDescription& tree, int leg) {
  return Vec3(0.0, 0.0, tree.legs.at(leg).cup_length);
}

std::array<FootFrame, kNumLegs> foot_frames(const TreeDescription& tree, const Kinematics& kin,
                                            const TreeState& /*state*/, const Plane& ground) {
  std::array<FootFrame, kNumLegs> out;
  for (int leg = 0; leg < kNumLegs && leg < static_cast<int>(tree.legs.size()); ++leg) {
    const int body = tree.legs[leg].cup_joint + 1;
    FootFrame& f = out[leg];
    f.body = body;
    const Mat3& r = kin.rotation[body];
    f.position = kin.position[body] + r * cup_rim_offset(tree, leg);
    f.velocity = kin.point_velocity(body, f.position);
    f.axis = -r.col(2);
    f.d_z = ground.signed_distance(f.position);
    f.theta = std::acos(std::clamp(f.axis.dot(ground.normal), -1.0, 1.0));
  }
  return out;
}

}  // namespace softquad
