#pragma once

// Open-loop reference gait (sequential single-leg stepping) and the CPG phase
// signal that enters the observation.

#include <array>
#include <vector>

#include "softquad/pneumatics.hpp"
#include "softquad/robot_model.hpp"

namespace softquad {

struct GaitKeyframe {
  double phase = 0.0;  // in [0, 1)
  std::array<double, kNumChambers> pressure{};
  std::array<double, kNumLegs> suction{};
};

/// Piecewise-linear, periodic keyframe schedule.
struct GaitSchedule {
  double period = 16.0;
  std::array<int, kNumLegs> sequence{0, 3, 1, 2};  // LF, RH, RF, LH
  std::vector<GaitKeyframe> keyframes;

  /// Throws ConfigError unless phases are strictly increasing in [0, 1) and
  /// at least three feet keep suction above `s_min` throughout.
  void validate(double s_min) const;

  /// Absolute targets at time t (t >= 0), linear between keyframes.
  GaitKeyframe evaluate(double t) const;
};

/// Parameters of the generated gait. Each leg owns one quarter of the cycle,
/// split into release/lift, swing, plant and pull; phase fractions below are
/// relative to that quarter.
struct GaitParams {
  double period = 16.0;
  std::array<int, kNumLegs> sequence{0, 3, 1, 2};
  double baseline_kpa = 25.0;
  double reach_kpa = 10.0;  // differential pressure for full reach
  double lift_kpa = 20.0;   // common-mode pressure drop while lifted
  double stance_suction = 0.75;
  double swing_suction = 0.25;
  double lift_end = 0.15;
  double swing_end = 0.45;
  double plant_end = 0.6;
};

GaitSchedule make_reference_gait(const GaitParams& params, const PneumaticConfig& limits);

/// Chamber pressures for one leg at reach r in [-1, 1] (positive moves the
/// foot forward) and lift l in [0, 1].
std::array<double, kChambersPerLeg> leg_pressures(const GaitParams& params, double reach, double lift);

/// Bounded increment that moves the current commands toward the schedule's
/// targets at time t, expressed in action units.
std::array<double, kActionDim> reference_action(const GaitSchedule& schedule, double t, const PneumaticState& pneu,
                                                const PneumaticConfig& cfg);

struct CpgState {
  double phase = 0.0;  // [0, 2π)
  double omega = 1.0;  // rad/s
};

CpgState cpg_advance(const CpgState& cpg, double dt);
std::array<double, 2> cpg_signal(const CpgState& cpg);

}  // namespace softquad
