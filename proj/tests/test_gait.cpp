#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "softquad/error.hpp"
#include "softquad/gait.hpp"
#include "softquad/simulator.hpp"

using namespace softquad;

namespace {

GaitSchedule reference() { return make_reference_gait(GaitParams{}, PneumaticConfig{}); }

// Index of the leg whose quarter contains the phase, and the fraction of
// that quarter elapsed.
std::pair<int, double> owner(const GaitParams& p, double phase) {
  const int slot = std::min(3, static_cast<int>(phase * 4));
  return {p.sequence[slot], phase * 4 - slot};
}

}  // namespace

TEST_CASE("reference gait passes its own validation") {
  const GaitSchedule g = reference();
  CHECK_NOTHROW(g.validate(ContactConfig{}.s_min));
  for (std::size_t i = 1; i < g.keyframes.size(); ++i) CHECK(g.keyframes[i].phase > g.keyframes[i - 1].phase);
}

TEST_CASE("validation rejects broken schedules") {
  GaitSchedule g = reference();
  g.sequence = {0, 0, 1, 2};
  CHECK_THROWS_AS(g.validate(0.5), ConfigError);

  g = reference();
  std::swap(g.keyframes[1], g.keyframes[2]);
  CHECK_THROWS_AS(g.validate(0.5), ConfigError);

  g = reference();
  for (auto& kf : g.keyframes) kf.suction[1] = kf.suction[2] = 0.1;
  CHECK_THROWS_AS(g.validate(0.5), ConfigError);

  GaitParams p;
  p.swing_end = 0.1;
  CHECK_THROWS_AS(make_reference_gait(p, PneumaticConfig{}), ConfigError);
}

TEST_CASE("schedule is periodic") {
  const GaitSchedule g = reference();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> td(0.0, 100.0);
  for (int k = 0; k < 500; ++k) {
    const double t = td(rng);
    const GaitKeyframe a = g.evaluate(t), b = g.evaluate(t + g.period);
    for (int c = 0; c < kNumChambers; ++c) CHECK(a.pressure[c] == doctest::Approx(b.pressure[c]).epsilon(1e-9));
    for (int l = 0; l < kNumLegs; ++l) CHECK(a.suction[l] == doctest::Approx(b.suction[l]).epsilon(1e-9));
  }
}

TEST_CASE("evaluation reproduces keyframes and interpolates between them") {
  const GaitSchedule g = reference();
  for (std::size_t i = 0; i < g.keyframes.size(); ++i) {
    const GaitKeyframe& kf = g.keyframes[i];
    const GaitKeyframe e = g.evaluate(kf.phase * g.period);
    for (int c = 0; c < kNumChambers; ++c) CHECK(e.pressure[c] == doctest::Approx(kf.pressure[c]));
    const GaitKeyframe& nx = g.keyframes[(i + 1) % g.keyframes.size()];
    const double mid_phase = 0.5 * (kf.phase + (i + 1 < g.keyframes.size() ? nx.phase : nx.phase + 1.0));
    const GaitKeyframe m = g.evaluate(mid_phase * g.period);
    for (int l = 0; l < kNumLegs; ++l)
      CHECK(m.suction[l] == doctest::Approx(0.5 * (kf.suction[l] + nx.suction[l])));
  }
}

TEST_CASE("reference action is zero at the phase-0 keyframe") {
  const GaitSchedule g = reference();
  PneumaticConfig cfg;
  PneumaticState pneu = PneumaticState::zero(4);
  pneu.commanded = g.keyframes[0].pressure;
  pneu.suction = g.keyframes[0].suction;
  const auto a = reference_action(g, 0.0, pneu, cfg);
  for (double x : a) CHECK(x == 0.0);
  CHECK_THROWS_AS(reference_action(g, -1.0, pneu, cfg), ModelError);
}

TEST_CASE("reference actions are bounded and track the schedule") {
  const GaitSchedule g = reference();
  PneumaticConfig cfg;
  PneumaticState pneu = PneumaticState::zero(4);
  pneu.commanded = g.keyframes[0].pressure;
  pneu.suction = g.keyframes[0].suction;
  double worst = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double t = k * cfg.dt_cmd;
    const auto a = reference_action(g, t, pneu, cfg);
    for (double x : a) CHECK(std::abs(x) <= 1.0);
    apply_action_increment(pneu, a, cfg);
    const GaitKeyframe target = g.evaluate(t);
    for (int c = 0; c < kNumChambers; ++c) worst = std::max(worst, std::abs(target.pressure[c] - pneu.commanded[c]));
  }
  // Fast lift ramps saturate the increment, so tracking lags by less than
  // one step's worth of pressure.
  CHECK(worst < cfg.dp_max_kpa);
}

TEST_CASE("swing leg releases suction while the others hold") {
  const GaitParams p;
  const GaitSchedule g = reference();
  const double s_min = ContactConfig{}.s_min;
  for (int k = 0; k < 4000; ++k) {
    const double phase = (k + 0.5) / 4000.0;
    const GaitKeyframe kf = g.evaluate(phase * g.period);
    const auto [swing, u] = owner(p, phase);
    int anchored = 0;
    for (int l = 0; l < kNumLegs; ++l) {
      if (kf.suction[l] > s_min) ++anchored;
      if (l != swing) CHECK(kf.suction[l] > s_min);
    }
    CHECK(anchored >= 3);
    if (u > p.lift_end && u < p.swing_end) CHECK(kf.suction[swing] < s_min);
  }
}

TEST_CASE("leg pressures: reach is differential, lift is common-mode") {
  GaitParams p;
  const auto rest = leg_pressures(p, 0.0, 0.0);
  for (double x : rest) CHECK(x == p.baseline_kpa);
  const auto fwd = leg_pressures(p, 1.0, 0.0);
  CHECK(fwd[0] + fwd[1] + fwd[2] == doctest::Approx(3 * p.baseline_kpa));
  const auto lifted = leg_pressures(p, 0.0, 1.0);
  for (double x : lifted) CHECK(x == p.baseline_kpa - p.lift_kpa);

  // Positive reach bends the leg so the foot moves toward +x of the body.
  const RobotModel model = default_robot_model();
  const LegForce u = pressure_to_force(model.legs[0], fwd);
  const Vec3 local_tip_shift(u[1], -u[0], 0.0);  // small-angle tip motion in the leg frame
  const Vec3 body_shift = model.legs[0].mount_rotation * local_tip_shift;
  CHECK(body_shift.x() > 0.0);
}

TEST_CASE("cpg wraps and embeds on the unit circle") {
  CpgState c{0.0, 2 * std::numbers::pi / 16.0};
  const auto s0 = cpg_signal(c);
  CHECK(s0[0] == 0.0);
  CHECK(s0[1] == 1.0);
  CpgState d = c;
  for (int k = 0; k < 32; ++k) d = cpg_advance(d, 0.5);
  CHECK(std::abs(std::remainder(d.phase - c.phase, 2 * std::numbers::pi)) < 1e-12);
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> dt(1e-3, 5.0);
  for (int k = 0; k < 1000; ++k) {
    d = cpg_advance(d, dt(rng));
    CHECK(d.phase >= 0.0);
    CHECK(d.phase < 2 * std::numbers::pi);
    const auto sc = cpg_signal(d);
    CHECK(sc[0] * sc[0] + sc[1] * sc[1] == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(cpg_advance(c, 0.0), ModelError);
  CHECK_THROWS_AS(cpg_advance(CpgState{0.0, 0.0}, 0.1), ModelError);
}

TEST_CASE("reference gait walks forward for 60 s without falling") {
  const RobotModel model = default_robot_model();
  SimConfig cfg;
  const GaitSchedule g = reference();
  Simulator sim(model, cfg);
  sim.set_actuation(g.keyframes[0].pressure, g.keyframes[0].suction);
  sim.place_on_ground(1.0);
  const Vec3 axis = Vec3::UnitX();
  const double x0 = sim.pose(axis).x_bar;
  double worst_tilt = 0.0, lowest = 1.0;
  for (int k = 0; k < 120; ++k) {
    sim.apply_action(reference_action(g, k * cfg.pneumatic.dt_cmd, sim.pneumatics(), cfg.pneumatic));
    sim.run_command_period();
    const BodyPose p = sim.pose(axis);
    worst_tilt = std::max({worst_tilt, std::abs(p.roll), std::abs(p.pitch)});
    lowest = std::min(lowest, p.z);
  }
  CHECK(sim.pose(axis).x_bar - x0 > 0.03);
  CHECK(worst_tilt < 45.0 * std::numbers::pi / 180);
  CHECK(lowest > 0.4 * model.z_ref);
}
