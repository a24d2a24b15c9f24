#include "softquad/gait.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "softquad/error.hpp"

namespace softquad {

void GaitSchedule::validate(double s_min) const {
  if (!(period > 0.0)) throw ConfigError("gait period must be positive");
  if (keyframes.empty()) throw ConfigError("gait needs at least one keyframe");
  std::array<bool, kNumLegs> seen{};
  for (int leg : sequence) {
    if (leg < 0 || leg >= kNumLegs || seen[leg]) throw ConfigError("gait sequence must be a permutation of 0..3");
    seen[leg] = true;
  }
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    const double ph = keyframes[i].phase;
    if (ph < 0.0 || ph >= 1.0) throw ConfigError("keyframe phase outside [0, 1)");
    if (i > 0 && !(ph > keyframes[i - 1].phase)) throw ConfigError("keyframe phases must strictly increase");
  }
  // Between consecutive keyframes a foot is safely anchored only if its
  // suction is above s_min at both ends.
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    const auto& a = keyframes[i];
    const auto& b = keyframes[(i + 1) % keyframes.size()];
    int anchored = 0;
    for (int leg = 0; leg < kNumLegs; ++leg)
      if (a.suction[leg] > s_min && b.suction[leg] > s_min) ++anchored;
    if (anchored < kNumLegs - 1)
      throw ConfigError("fewer than three anchored feet after keyframe " + std::to_string(i));
  }
}

GaitKeyframe GaitSchedule::evaluate(double t) const {
  double phase = std::fmod(t / period, 1.0);
  if (phase < 0.0) phase += 1.0;
  const std::size_t n = keyframes.size();
  std::size_t i = 0;
  while (i + 1 < n && keyframes[i + 1].phase <= phase) ++i;
  const GaitKeyframe& a = keyframes[i];
  // Wrap from the last keyframe to the first one of the next cycle; before the
  // first keyframe, interpolate from the last one of the previous cycle.
  const GaitKeyframe* from = &a;
  const GaitKeyframe* to = &keyframes[(i + 1) % n];
  double start = a.phase;
  double end = (i + 1 < n) ? to->phase : to->phase + 1.0;
  if (phase < keyframes[0].phase) {
    from = &keyframes[n - 1];
    to = &keyframes[0];
    start = from->phase - 1.0;
    end = to->phase;
  }
  const double w = end > start ? (phase - start) / (end - start) : 0.0;
  GaitKeyframe out;
  out.phase = phase;
  for (int c = 0; c < kNumChambers; ++c) out.pressure[c] = (1 - w) * from->pressure[c] + w * to->pressure[c];
  for (int l = 0; l < kNumLegs; ++l) out.suction[l] = (1 - w) * from->suction[l] + w * to->suction[l];
  return out;
}

std::array<double, kChambersPerLeg> leg_pressures(const GaitParams& params, double reach, double lift) {
  const double base = params.baseline_kpa - params.lift_kpa * lift;
  return {base - params.reach_kpa * reach, base + 0.5 * params.reach_kpa * reach,
          base + 0.5 * params.reach_kpa * reach};
}

namespace {

struct LegPoint {
  double u;  // fraction of the leg's own quarter
  double reach, lift, suction;
};

// Piecewise-linear profile of one leg relative to the start of its quarter.
std::vector<LegPoint> leg_profile(const GaitParams& p) {
  return {{0.0, -1.0, 0.0, p.stance_suction},
          {p.lift_end, -1.0, 1.0, p.swing_suction},
          {p.swing_end, 1.0, 1.0, p.swing_suction},
          {p.plant_end, 1.0, 0.0, p.stance_suction},
          {1.0, -1.0, 0.0, p.stance_suction}};
}

// Evaluates the profile at a cycle phase for a leg whose quarter starts at
// `slot` / 4. Outside its quarter the leg holds the end-of-pull pose.
LegPoint profile_at(const std::vector<LegPoint>& prof, int slot, double phase) {
  double u = phase * kNumLegs - slot;
  u -= std::floor(u / kNumLegs) * kNumLegs;  // into [0, 4)
  if (u >= 1.0) return {u, prof.back().reach, prof.back().lift, prof.back().suction};
  std::size_t i = 0;
  while (i + 2 < prof.size() && prof[i + 1].u <= u) ++i;
  const LegPoint& a = prof[i];
  const LegPoint& b = prof[i + 1];
  const double w = (u - a.u) / (b.u - a.u);
  return {u, a.reach + w * (b.reach - a.reach), a.lift + w * (b.lift - a.lift),
          a.suction + w * (b.suction - a.suction)};
}

}  // namespace

GaitSchedule make_reference_gait(const GaitParams& params, const PneumaticConfig& limits) {
  if (!(0.0 < params.lift_end && params.lift_end < params.swing_end && params.swing_end < params.plant_end &&
        params.plant_end < 1.0))
    throw ConfigError("gait phase fractions must satisfy 0 < lift < swing < plant < 1");
  GaitSchedule g;
  g.period = params.period;
  g.sequence = params.sequence;
  const auto prof = leg_profile(params);
  std::set<double> phases;
  for (int slot = 0; slot < kNumLegs; ++slot)
    for (std::size_t k = 0; k + 1 < prof.size(); ++k) phases.insert((slot + prof[k].u) / kNumLegs);
  for (double ph : phases) {
    GaitKeyframe kf;
    kf.phase = ph;
    for (int slot = 0; slot < kNumLegs; ++slot) {
      const int leg = params.sequence[slot];
      const LegPoint lp = profile_at(prof, slot, ph);
      const auto pr = leg_pressures(params, lp.reach, lp.lift);
      for (int j = 0; j < kChambersPerLeg; ++j)
        kf.pressure[leg * kChambersPerLeg + j] = std::clamp(pr[j], limits.p_min_kpa, limits.p_max_kpa);
      kf.suction[leg] = lp.suction;
    }
    g.keyframes.push_back(kf);
  }
  return g;
}

std::array<double, kActionDim> reference_action(const GaitSchedule& schedule, double t, const PneumaticState& pneu,
                                                const PneumaticConfig& cfg) {
  if (t < 0.0) throw ModelError("reference_action: negative time");
  const GaitKeyframe target = schedule.evaluate(t);
  std::array<double, kActionDim> a{};
  for (int c = 0; c < kNumChambers; ++c)
    a[c] = std::clamp((target.pressure[c] - pneu.commanded[c]) / cfg.dp_max_kpa, -1.0, 1.0);
  for (int l = 0; l < kNumLegs; ++l)
    a[kNumChambers + l] = std::clamp((target.suction[l] - pneu.suction[l]) / cfg.ds_max, -1.0, 1.0);
  return a;
}

CpgState cpg_advance(const CpgState& cpg, double dt) {
  if (!(dt > 0.0)) throw ModelError("cpg_advance: dt must be positive");
  if (!(cpg.omega > 0.0)) throw ModelError("cpg_advance: omega must be positive");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  CpgState out = cpg;
  out.phase = std::fmod(cpg.phase + cpg.omega * dt, two_pi);
  if (out.phase < 0.0) out.phase += two_pi;
  return out;
}

std::array<double, 2> cpg_signal(const CpgState& cpg) { return {std::sin(cpg.phase), std::cos(cpg.phase)}; }

}  // namespace softquad
