#pragma once

// One robot instance: tree dynamics, pneumatic actuation and ground contact
// advanced together on the three nested clocks (command, inner loop, physics).

#include <array>
#include <span>

#include "softquad/contact.hpp"
#include "softquad/pneumatics.hpp"
#include "softquad/rigid_tree.hpp"

namespace softquad {

struct SimConfig {
  PneumaticConfig pneumatic;
  ContactConfig contact;
};

class Simulator {
 public:
  Simulator(const RobotModel& model, const SimConfig& cfg);

  const RobotModel& model() const { return model_; }
  const TreeDescription& tree() const { return dyn_.tree(); }
  const SimConfig& config() const { return cfg_; }
  const TreeState& state() const { return state_; }
  const PneumaticState& pneumatics() const { return pneu_; }
  const ContactReport& contact() const { return report_; }

  /// Per-foot normal force averaged over the last inner-loop period.
  const std::array<double, kNumLegs>& mean_grf() const { return mean_grf_; }
  /// Base velocity one physics step before the current state (IMU proxy).
  const Vec3& previous_base_velocity() const { return prev_velocity_; }

  void set_state(const TreeState& s);
  void set_suction_enabled(bool enabled) { cfg_.contact.suction_enabled = enabled; }

  /// Sets commanded and actual pressures and suction directly, with the
  /// hysteresis memory at the matching targets.
  void set_actuation(const std::array<double, kNumChambers>& pressure_kpa,
                     const std::array<double, kNumLegs>& suction);

  /// Places the robot with its feet on the ground plane, body aligned with
  /// the plane, at rest, and lets it settle for `settle_time` seconds.
  /// Throws ModelError when no resting pose is reached.
  void place_on_ground(double settle_time);

  void apply_action(std::span<const double> action);
  void run_inner_period();
  void run_command_period();
  void run_for(double seconds);

  BodyPose pose(const Vec3& travel_axis) const;

 private:
  void physics_step(const JointDrive& drive);

  RobotModel model_;
  SimConfig cfg_;
  TreeDynamics dyn_;
  TreeState state_;
  PneumaticState pneu_;
  ContactState contact_state_;
  ContactReport report_;
  std::array<double, kNumLegs> mean_grf_{};
  Vec3 prev_velocity_ = Vec3::Zero();
  WrenchProvider provider_;
};

}  // namespace softquad
