#include "softquad/pneumatics.hpp"

#include <algorithm>
#include <cmath>

#include "softquad/error.hpp"

namespace softquad {

namespace {
constexpr double kPaPerKpa = 1000.0;

int ratio(double num, double den, const char* what) {
  const double r = num / den;
  const int n = static_cast<int>(std::lround(r));
  if (n < 1 || std::abs(r - n) > 1e-9) throw ModelError(std::string(what) + " must be an integer multiple");
  return n;
}
}  // namespace

int PneumaticConfig::inner_steps() const { return ratio(dt_cmd, dt_inner, "dt_cmd / dt_inner"); }
int PneumaticConfig::physics_steps() const { return ratio(dt_inner, dt_physics, "dt_inner / dt_physics"); }

LegForce pressure_to_force(const LegModel& leg, const LegPressures& p_kpa) {
  double sin_sum = 0.0, cos_sum = 0.0, sum = 0.0;
  for (int j = 0; j < kChambersPerLeg; ++j) {
    const double p = p_kpa[j] * kPaPerKpa;
    sin_sum += p * std::sin(leg.chamber_angles[j]);
    cos_sum += p * std::cos(leg.chamber_angles[j]);
    sum += p;
  }
  const double ar = leg.chamber_area * leg.chamber_radius;
  return {ar * sin_sum, -ar * cos_sum, leg.chamber_area * sum};
}

LegGains gains_from_force(const LegModel& leg, const LegForce& u) {
  LegGains g;
  const double n = leg.n_segments;
  for (int t = 0; t < kJointTypes; ++t) {
    g.kp_total[t] = leg.base_stiffness[t] + leg.stiffness_gain[t] * std::abs(u[t]);
    g.kd_total[t] = leg.base_damping[t] + leg.damping_gain[t] * std::abs(u[t]);
    g.kp_elem[t] = n * g.kp_total[t];
    g.kd_elem[t] = n * g.kd_total[t];
  }
  return g;
}

std::array<double, kJointTypes> target_positions(const LegModel& /*leg*/, const LegForce& u, const LegGains& gains) {
  std::array<double, kJointTypes> q{};
  for (int t = 0; t < kJointTypes; ++t) q[t] = u[t] / gains.kp_total[t];
  return q;
}

void hysteresis_filter(std::span<const double> q_prev, std::span<const double> q_targ,
                       std::span<const double> alpha_expand, std::span<const double> alpha_contract,
                       std::span<double> q_cmd) {
  const std::size_t n = q_prev.size();
  if (q_targ.size() != n || alpha_expand.size() != n || alpha_contract.size() != n || q_cmd.size() != n)
    throw ModelError("hysteresis_filter: length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = q_targ[i] - q_prev[i];
    const double alpha = diff > 0.0 ? alpha_expand[i] : alpha_contract[i];
    q_cmd[i] = q_prev[i] + alpha * diff;
  }
}

void apply_action_increment(PneumaticState& pneu, std::span<const double> action, const PneumaticConfig& cfg) {
  if (action.size() != kActionDim)
    throw ModelError("action must have " + std::to_string(kActionDim) + " entries, got " +
                     std::to_string(action.size()));
  for (double a : action)
    if (!std::isfinite(a)) throw ModelError("action contains non-finite entries");
  for (int i = 0; i < kNumChambers; ++i) {
    const double a = std::clamp(action[i], -1.0, 1.0);
    pneu.commanded[i] = std::clamp(pneu.commanded[i] + cfg.dp_max_kpa * a, cfg.p_min_kpa, cfg.p_max_kpa);
  }
  for (int i = 0; i < kNumLegs; ++i) {
    const double a = std::clamp(action[kNumChambers + i], -1.0, 1.0);
    pneu.suction[i] = std::clamp(pneu.suction[i] + cfg.ds_max * a, 0.0, 1.0);
  }
}

JointDrive inner_loop_step(PneumaticState& pneu, const RobotModel& model, const TreeDescription& tree,
                           const PneumaticConfig& cfg, GainSchedule* schedule) {
  const int m = tree.dof();
  if (pneu.filtered_q.size() != m) throw ModelError("inner_loop_step: hysteresis memory has wrong length");
  JointDrive drive = JointDrive::zero(m);
  VecX q_targ = VecX::Zero(m);
  VecX a_exp = VecX::Ones(m);
  VecX a_con = VecX::Ones(m);
  if (schedule) {
    schedule->kp = VecX::Zero(m);
    schedule->kd = VecX::Zero(m);
  }

  for (int leg_idx = 0; leg_idx < kNumLegs; ++leg_idx) {
    const LegModel& leg = model.legs[leg_idx];
    const LegLayout& layout = tree.legs[leg_idx];
    const double lag = std::min(1.0, cfg.dt_inner / leg.valve_time_constant);
    LegPressures p{};
    for (int j = 0; j < kChambersPerLeg; ++j) {
      const int c = leg_idx * kChambersPerLeg + j;
      pneu.pressure[c] += lag * (pneu.commanded[c] - pneu.pressure[c]);
      p[j] = pneu.pressure[c];
    }
    const LegForce u = pressure_to_force(leg, p);
    const LegGains g = gains_from_force(leg, u);
    const auto targets = target_positions(leg, u, g);
    for (int s = 0; s < layout.n_segments; ++s) {
      for (int t = 0; t < kJointTypes; ++t) {
        const int j = layout.joint(s, static_cast<JointType>(t));
        drive.stiffness[j] = g.kp_elem[t];
        drive.damping[j] = g.kd_elem[t];
        q_targ[j] = targets[t];
        a_exp[j] = leg.alpha_expand[t];
        a_con[j] = leg.alpha_contract[t];
      }
    }
    drive.stiffness[layout.cup_joint] = leg.cup_stiffness;
    drive.damping[layout.cup_joint] = leg.cup_damping;
    if (schedule) schedule->u[leg_idx] = u;
  }

  VecX q_cmd(m);
  hysteresis_filter({pneu.filtered_q.data(), static_cast<std::size_t>(m)},
                    {q_targ.data(), static_cast<std::size_t>(m)}, {a_exp.data(), static_cast<std::size_t>(m)},
                    {a_con.data(), static_cast<std::size_t>(m)}, {q_cmd.data(), static_cast<std::size_t>(m)});
  pneu.filtered_q = q_cmd;
  drive.target = q_cmd;
  if (schedule) {
    schedule->kp = drive.stiffness;
    schedule->kd = drive.damping;
    schedule->q_targ = q_targ;
  }
  return drive;
}

}  // namespace softquad
