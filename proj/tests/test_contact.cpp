#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "softquad/contact.hpp"
#include "softquad/error.hpp"
#include "softquad/simulator.hpp"

using namespace softquad;

namespace {

FootFrame foot_at(double d_z, double theta) {
  FootFrame f;
  f.d_z = d_z;
  f.theta = theta;
  return f;
}

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

TEST_CASE("penalty law") {
  ContactConfig cfg;
  cfg.stiffness = 1e4;
  CHECK(penalty_normal_force(-0.001, 0.0, cfg) == 0.0);
  CHECK(penalty_normal_force(0.001, 0.0, cfg) == doctest::Approx(10.0).epsilon(1e-14));
  // Separating fast enough: clamped at zero rather than pulling.
  CHECK(penalty_normal_force(0.001, -100.0, cfg) == 0.0);
}

TEST_CASE("suction engages only when all three gates hold") {
  ContactConfig cfg;
  const Plane ground{};
  const double s_on = 0.8, s_off = 0.3;
  for (int mask = 0; mask < 8; ++mask) {
    const bool near = mask & 1, aligned = mask & 2, commanded = mask & 4;
    const FootFrame f = foot_at(near ? 0.001 : 2 * cfg.dz_max, aligned ? 2 * kDeg : 20 * kDeg);
    const SuctionResult r = suction_force(f, commanded ? s_on : s_off, ground, cfg);
    const bool expect = near && aligned && commanded;
    CHECK(r.engaged == expect);
    CHECK((r.force.norm() > 0.0) == expect);
  }
  const SuctionResult r = suction_force(foot_at(0.001, 2 * kDeg), 0.8, ground, cfg);
  CHECK(r.force.z() == doctest::Approx(-0.8 * cfg.suction_force_max));
}

TEST_CASE("suction gates are strict") {
  ContactConfig cfg;
  const Plane ground{};
  CHECK_FALSE(suction_force(foot_at(0.001, 0.0), cfg.s_min, ground, cfg).engaged);
  CHECK_FALSE(suction_force(foot_at(cfg.dz_max, 0.0), 0.9, ground, cfg).engaged);
  CHECK_FALSE(suction_force(foot_at(0.0, cfg.theta_max), 0.9, ground, cfg).engaged);
  cfg.suction_enabled = false;
  CHECK_FALSE(suction_force(foot_at(0.0, 0.0), 0.9, ground, cfg).engaged);
}

TEST_CASE("suction force opposes the plane normal with bounded magnitude") {
  ContactConfig cfg;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    const Plane ground = Plane::inclined((u(rng) - 0.5) * 0.4);
    const FootFrame f = foot_at(u(rng) * 0.01 - 0.002, u(rng) * 20 * kDeg);
    const SuctionResult r = suction_force(f, u(rng), ground, cfg);
    CHECK(r.force.norm() <= cfg.suction_force_max + 1e-12);
    if (r.engaged) CHECK(r.force.normalized().dot(ground.normal) == doctest::Approx(-1.0));
  }
}

TEST_CASE("contact config validation") {
  ContactConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.s_min = 1.0;
  CHECK_THROWS_AS(validate(cfg), ModelError);
  cfg = ContactConfig{};
  cfg.theta_max = 2.0;
  CHECK_THROWS_AS(validate(cfg), ModelError);
  cfg = ContactConfig{};
  cfg.friction = 0.0;
  CHECK_THROWS_AS(validate(cfg), ModelError);
}

TEST_CASE("a foot above the ground feels no force") {
  const RobotModel model = default_robot_model();
  const TreeDescription tree = build_tree(model);
  TreeState s = TreeState::zero(tree.dof());
  s.base_position.z() = 1.0;
  const Kinematics kin = forward_kinematics(tree, s);
  ContactState cs;
  Wrenches w(tree.dof() + 1, Vec6::Zero());
  const ContactReport r = contact_forces(tree, kin, s, Plane{}, model.body_half_extents, {0, 0, 0, 0},
                                         ContactConfig{}, cs, w);
  CHECK(r.total_normal_force() == 0.0);
  for (const Vec6& x : w) CHECK(x.norm() == 0.0);
}

TEST_CASE("robot at rest: normal forces carry the weight") {
  const RobotModel model = default_robot_model();
  SimConfig cfg;
  Simulator sim(model, cfg);
  sim.set_actuation({}, {});
  sim.place_on_ground(3.0);
  const double mg = model.total_mass() * 9.81;
  const ContactReport& r = sim.contact();
  CHECK(r.body_normal_force == 0.0);
  CHECK(r.total_normal_force() == doctest::Approx(mg).epsilon(0.02));
  double max_pen = 0.0, sum_pen = 0.0;
  for (const auto& f : r.feet) {
    max_pen = std::max(max_pen, f.penetration);
    sum_pen += f.penetration;
    CHECK(f.tangential_force <= cfg.contact.friction * f.normal_force + 1e-9);
  }
  CHECK(max_pen <= 1.1 * mg / cfg.contact.stiffness);
  CHECK(cfg.contact.stiffness * sum_pen == doctest::Approx(mg).epsilon(0.02));
}

TEST_CASE("robot at rest with suction: normal force adds the suction load") {
  const RobotModel model = default_robot_model();
  SimConfig cfg;
  Simulator sim(model, cfg);
  sim.set_actuation({}, {0.8, 0.8, 0.8, 0.8});
  sim.place_on_ground(3.0);
  const ContactReport& r = sim.contact();
  double suction = 0.0;
  for (const auto& f : r.feet) {
    CHECK(f.suction_engaged);
    suction += f.suction_force;
  }
  CHECK(suction == doctest::Approx(4 * 0.8 * cfg.contact.suction_force_max));
  CHECK(r.total_normal_force() == doctest::Approx(model.total_mass() * 9.81 + suction).epsilon(0.02));
}

TEST_CASE("on an incline steeper than the friction angle, suction holds the robot") {
  RobotModel model = default_robot_model();
  model.ground = Plane::inclined(5.0 * kDeg);
  SimConfig cfg;
  cfg.contact.friction = 0.05;  // below tan(5 deg)
  const Vec3 axis(std::cos(5 * kDeg), 0, std::sin(5 * kDeg));

  Simulator held(model, cfg);
  held.set_actuation({}, {0.8, 0.8, 0.8, 0.8});
  held.place_on_ground(0.5);
  const double x0 = held.pose(axis).x_bar;
  held.run_for(3.0);
  CHECK(std::abs(held.pose(axis).x_bar - x0) < 0.002);

  Simulator loose(model, cfg);
  loose.set_suction_enabled(false);
  loose.set_actuation({}, {0.8, 0.8, 0.8, 0.8});
  loose.place_on_ground(0.5);
  const double y0 = loose.pose(axis).x_bar;
  loose.run_for(3.0);
  CHECK(loose.pose(axis).x_bar - y0 < -0.05);
}
