#include "softquad/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "softquad/error.hpp"

namespace softquad {

Simulator::Simulator(const RobotModel& model, const SimConfig& cfg)
    : model_(model), cfg_(cfg), dyn_(build_tree(model)) {
  validate(cfg_.contact);
  cfg_.pneumatic.inner_steps();
  cfg_.pneumatic.physics_steps();
  state_ = TreeState::zero(tree().dof());
  pneu_ = PneumaticState::zero(tree().dof());
  provider_ = [this](const TreeState& s, const Kinematics& kin, Wrenches& w) {
    std::array<double, kNumLegs> suction{};
    std::copy(pneu_.suction.begin(), pneu_.suction.end(), suction.begin());
    report_ = contact_forces(tree(), kin, s, model_.ground, model_.body_half_extents, suction, cfg_.contact,
                             contact_state_, w);
  };
}

void Simulator::set_state(const TreeState& s) {
  if (s.q.size() != tree().dof() || s.qd.size() != tree().dof())
    throw ModelError("set_state: joint vector length mismatch");
  state_ = s;
  prev_velocity_ = s.base_linear_velocity;
  contact_state_ = ContactState{};
}

void Simulator::set_actuation(const std::array<double, kNumChambers>& pressure_kpa,
                              const std::array<double, kNumLegs>& suction) {
  pneu_.commanded = pressure_kpa;
  pneu_.pressure = pressure_kpa;
  pneu_.suction = suction;
  // Run the gain law once with unit hysteresis to seed the filter memory.
  GainSchedule sched;
  PneumaticState probe = pneu_;
  inner_loop_step(probe, model_, tree(), cfg_.pneumatic, &sched);
  pneu_.filtered_q = sched.q_targ;
  for (const LegLayout& leg : tree().legs) pneu_.filtered_q[leg.cup_joint] = 0.0;
}

void Simulator::place_on_ground(double settle_time) {
  TreeState s = TreeState::zero(tree().dof());
  s.q = pneu_.filtered_q;
  const Vec3 n = model_.ground.normal;
  s.base_orientation = Quat::FromTwoVectors(Vec3::UnitZ(), n);
  const Kinematics kin = forward_kinematics(tree(), s);
  const auto feet = foot_frames(tree(), kin, s, model_.ground);
  double lowest = feet[0].d_z;
  for (const auto& f : feet) lowest = std::min(lowest, f.d_z);
  s.base_position -= lowest * n;
  set_state(s);
  run_for(settle_time);
  const BodyPose p = pose(Vec3::UnitX());
  const double limit = 20.0 * std::numbers::pi / 180.0;
  if (report_.body_normal_force > 0.0 || std::abs(p.roll) > limit || std::abs(p.pitch) > limit ||
      p.z < 0.5 * model_.z_ref)
    throw ModelError("no resting pose: robot does not stand on its feet");
}

void Simulator::apply_action(std::span<const double> action) {
  apply_action_increment(pneu_, action, cfg_.pneumatic);
}

void Simulator::physics_step(const JointDrive& drive) {
  prev_velocity_ = state_.base_linear_velocity;
  state_ = dyn_.step(state_, drive, provider_, cfg_.pneumatic.dt_physics);
}

void Simulator::run_inner_period() {
  const JointDrive drive = inner_loop_step(pneu_, model_, tree(), cfg_.pneumatic);
  const int n = cfg_.pneumatic.physics_steps();
  std::array<double, kNumLegs> acc{};
  for (int k = 0; k < n; ++k) {
    physics_step(drive);
    for (int i = 0; i < kNumLegs; ++i) acc[i] += report_.feet[i].normal_force;
  }
  for (int i = 0; i < kNumLegs; ++i) mean_grf_[i] = acc[i] / n;
}

void Simulator::run_command_period() {
  const int n = cfg_.pneumatic.inner_steps();
  for (int k = 0; k < n; ++k) run_inner_period();
}

void Simulator::run_for(double seconds) {
  const int n = static_cast<int>(std::lround(seconds / cfg_.pneumatic.dt_inner));
  for (int k = 0; k < n; ++k) run_inner_period();
}

BodyPose Simulator::pose(const Vec3& travel_axis) const {
  return body_kinematics(state_, model_.ground, travel_axis, model_.gravity, prev_velocity_,
                         cfg_.pneumatic.dt_physics);
}

}  // namespace softquad
