#pragma once

// Reduced-coordinate dynamics of a floating-base kinematic tree with
// single-DOF joints. Forward dynamics is the articulated-body algorithm in
// world coordinates; integration is drift-kick-drift (Störmer–Verlet) with
// joint spring-dampers folded in implicitly.

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "softquad/robot_model.hpp"
#include "softquad/spatial.hpp"

namespace softquad {

struct Link {
  int parent = -1;  // -1: attached to the base
  JointType joint = JointType::RevoluteX;
  Vec3 offset = Vec3::Zero();          // joint origin in the parent frame
  Mat3 rotation = Mat3::Identity();    // fixed parent -> joint-frame rotation
  double mass = 0.0;
  Vec3 com = Vec3::Zero();             // in the link frame
  Mat3 inertia = Mat3::Zero();         // about the COM, link axes
};

/// Joint-index bookkeeping for one leg of the robot tree.
struct LegLayout {
  int first_joint = 0;
  int n_segments = 0;
  int cup_joint = 0;
  double cup_length = 0.0;

  int joint(int segment, JointType type) const {
    return first_joint + 3 * segment + static_cast<int>(type);
  }
};

struct TreeDescription {
  bool floating_base = true;
  double base_mass = 1.0;
  Mat3 base_inertia = Mat3::Identity();
  std::vector<Link> links;  // topologically ordered: parent < child
  std::vector<LegLayout> legs;
  Vec3 gravity{0.0, 0.0, -9.81};

  int dof() const { return static_cast<int>(links.size()); }
  double total_mass() const;
};

/// Builds the robot tree: floating body plus, per leg, n_i segments of
/// (revolute-x, revolute-y, prismatic-z) joints and a terminal cup prismatic.
TreeDescription build_tree(const RobotModel& model);

struct TreeState {
  Vec3 base_position = Vec3::Zero();
  Quat base_orientation = Quat::Identity();
  Vec3 base_linear_velocity = Vec3::Zero();   // world frame, of the base origin
  Vec3 base_angular_velocity = Vec3::Zero();  // world frame
  VecX q;
  VecX qd;
  double time = 0.0;

  static TreeState zero(int dof) {
    TreeState s;
    s.q = VecX::Zero(dof);
    s.qd = VecX::Zero(dof);
    return s;
  }
};

/// Per-joint actuation: feed-forward torque plus a spring-damper toward
/// `target`. The spring-damper is integrated implicitly.
struct JointDrive {
  VecX torque;
  VecX stiffness;
  VecX damping;
  VecX target;

  static JointDrive zero(int dof) {
    return {VecX::Zero(dof), VecX::Zero(dof), VecX::Zero(dof), VecX::Zero(dof)};
  }
  /// Explicit PD torque k_p (target - q) - k_d qd + feed-forward at a state.
  VecX explicit_torque(const TreeState& s) const;
};

/// World poses of the base (index 0) and every link (index i + 1).
struct Kinematics {
  std::vector<Mat3> rotation;
  std::vector<Vec3> position;
  std::vector<Vec6> motion_subspace;  // per link, world coordinates
  std::vector<Vec6> velocity;         // per body, spatial, world origin

  Vec3 point_velocity(int body, const Vec3& p) const {
    return linear(velocity[body]) + angular(velocity[body]).cross(p);
  }
};

Kinematics forward_kinematics(const TreeDescription& tree, const TreeState& state);

struct Accelerations {
  Vec6 base = Vec6::Zero();  // spatial acceleration of the base, world origin
  VecX qdd;
};

/// External spatial forces, one per body: index 0 base, index i + 1 link i.
using Wrenches = std::vector<Vec6>;
using WrenchProvider = std::function<void(const TreeState&, const Kinematics&, Wrenches&)>;

void add_point_force(Wrenches& w, int body, const Vec3& point, const Vec3& force);

/// Articulated-body forward dynamics with reusable scratch storage. One
/// instance per simulator; not thread-safe.
class TreeDynamics {
 public:
  explicit TreeDynamics(TreeDescription tree);

  const TreeDescription& tree() const { return tree_; }

  /// Accelerations at `state`. With `implicit_dt` > 0 the drive springs are
  /// evaluated at the end of a drift-kick-drift step of that length.
  Accelerations forward_dynamics(const TreeState& state, const JointDrive& drive,
                                 const Wrenches& external, double implicit_dt = 0.0);

  /// One drift-kick-drift step. External forces come from `provider`,
  /// evaluated at the half-step configuration.
  TreeState step(const TreeState& state, const JointDrive& drive, const WrenchProvider& provider,
                 double dt);

  const Kinematics& last_kinematics() const { return kin_; }

 private:
  // Uses kin_, which must already hold the kinematics of `state`.
  Accelerations articulated_dynamics(const TreeState& state, const JointDrive& drive, const Wrenches& external,
                                     double implicit_dt);

  TreeDescription tree_;
  Kinematics kin_;
  std::vector<Mat6> inertia_;
  std::vector<Mat6> articulated_;
  std::vector<Vec6> bias_;
  std::vector<Vec6> coriolis_;
  std::vector<Vec6> u_vec_;
  std::vector<Vec6> accel_;
  std::vector<double> d_inv_;
  std::vector<double> u_;
  Wrenches wrench_scratch_;
};

/// Drift-kick-drift step with fixed external wrenches.
TreeState step_dynamics(const TreeDescription& tree, const TreeState& state, const JointDrive& drive,
                        const Wrenches& external, double dt);

/// Spatial velocity of the base at the world origin.
Vec6 base_spatial_velocity(const TreeState& s);

/// World-frame spatial inertia of every body (index 0 base).
std::vector<Mat6> body_inertias(const TreeDescription& tree, const Kinematics& kin);

Vec3 center_of_mass(const TreeDescription& tree, const Kinematics& kin);
Vec3 linear_momentum(const TreeDescription& tree, const TreeState& state);

struct BodyPose {
  double x_bar = 0.0;  // base position along the travel axis
  double z = 0.0;      // base height above the ground plane
  double roll = 0.0, pitch = 0.0, yaw = 0.0;  // intrinsic Z-Y-X
  Vec3 omega_body = Vec3::Zero();
  Vec3 linear_accel = Vec3::Zero();  // specific force in body axes (includes gravity)
  bool near_gimbal_lock = false;
};

/// Roll, pitch and yaw of a rotation, R = Rz(yaw) Ry(pitch) Rx(roll).
std::array<double, 3> euler_zyx(const Mat3& r);

/// `prev_linear_velocity` is the base velocity `fd_dt` seconds earlier; the
/// IMU acceleration is their finite difference.
BodyPose body_kinematics(const TreeState& state, const Plane& ground, const Vec3& travel_axis,
                         const Vec3& gravity, const Vec3& prev_linear_velocity, double fd_dt);

struct FootFrame {
  Vec3 position = Vec3::Zero();  // cup rim point
  Vec3 velocity = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();     // from the rim back up the leg
  double d_z = 0.0;              // signed distance rim -> plane along the normal
  double theta = 0.0;            // angle between foot axis and plane normal
  int body = 0;                  // body index of the cup link (link + 1)
};

std::array<FootFrame, kNumLegs> foot_frames(const TreeDescription& tree, const Kinematics& kin,
                                            const TreeState& state, const Plane& ground);

/// Rim point of each cup in its link frame.
Vec3 cup_rim_offset(const TreeDescription& tree, int leg);

}  // namespace softquad
