#pragma once

// Chamber pressures -> joint forces, pressure-dependent stiffness/damping,
// hysteresis-filtered joint targets, and the incremental command interface.

#include <array>
#include <span>

#include "softquad/rigid_tree.hpp"
#include "softquad/robot_model.hpp"

namespace softquad {

inline constexpr int kActionDim = 16;  // 12 pressure increments + 4 suction increments

struct PneumaticConfig {
  double p_min_kpa = 0.0;
  double p_max_kpa = 60.0;
  double dp_max_kpa = 10.0;  // per policy step at |action| = 1
  double ds_max = 0.25;
  double dt_cmd = 0.5;
  double dt_inner = 0.02;
  double dt_physics = 0.002;

  int inner_steps() const;    // dt_cmd / dt_inner
  int physics_steps() const;  // dt_inner / dt_physics
};

using LegPressures = std::array<double, kChambersPerLeg>;

/// Generalized leg forces indexed by JointType: (tau_x N·m, tau_y N·m, f_z N).
using LegForce = std::array<double, kJointTypes>;

/// u = G p with G built from the chamber geometry. Pressures in kPa.
LegForce pressure_to_force(const LegModel& leg, const LegPressures& p_kpa);

struct LegGains {
  std::array<double, kJointTypes> kp_total{};
  std::array<double, kJointTypes> kd_total{};
  std::array<double, kJointTypes> kp_elem{};  // n_i * total, springs in series
  std::array<double, kJointTypes> kd_elem{};
};

LegGains gains_from_force(const LegModel& leg, const LegForce& u);

/// Per-joint-type target u / k_p,total, shared by all segments of the leg.
std::array<double, kJointTypes> target_positions(const LegModel& leg, const LegForce& u, const LegGains& gains);

/// q_cmd = q_prev + alpha ⊙ (q_targ - q_prev), alpha picked per element by the
/// sign of (q_targ - q_prev).
void hysteresis_filter(std::span<const double> q_prev, std::span<const double> q_targ,
                       std::span<const double> alpha_expand, std::span<const double> alpha_contract,
                       std::span<double> q_cmd);

struct PneumaticState {
  std::array<double, kNumChambers> pressure{};   // kPa
  std::array<double, kNumChambers> commanded{};  // kPa
  std::array<double, kNumLegs> suction{};        // [0, 1]
  VecX filtered_q;                               // hysteresis memory, one per joint

  static PneumaticState zero(int dof) {
    PneumaticState s;
    s.filtered_q = VecX::Zero(dof);
    return s;
  }
};

/// Adds a scaled 16-D increment and clamps. Throws ModelError on a wrong
/// length or non-finite entries.
void apply_action_increment(PneumaticState& pneu, std::span<const double> action, const PneumaticConfig& cfg);

/// Diagnostic output of one inner-loop iteration.
struct GainSchedule {
  VecX kp;      // per-joint element stiffness
  VecX kd;      // per-joint element damping
  VecX q_targ;  // unfiltered targets
  std::array<LegForce, kNumLegs> u{};
};

/// One inner-loop iteration: valve lag toward the commanded pressures, then
/// gains, targets and the hysteresis filter. Returns the joint drive applied
/// for the following physics steps.
JointDrive inner_loop_step(PneumaticState& pneu, const RobotModel& model, const TreeDescription& tree,
                           const PneumaticConfig& cfg, GainSchedule* schedule = nullptr);

}  // namespace softquad
