#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "softquad/env.hpp"
#include "softquad/error.hpp"

using namespace softquad;

namespace {

EnvConfig plain_config() {
  EnvConfig cfg;
  cfg.randomization.enabled = false;
  return cfg;
}

std::vector<double> ref_action(const LocomotionEnv& env) {
  const auto a = reference_action(env.reference_gait(), env.time(), env.sim().pneumatics(),
                                  env.config().sim.pneumatic);
  return {a.begin(), a.end()};
}

double stddev(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

}  // namespace

TEST_CASE("observation and action dimensions") {
  CHECK(kFrameDim == 34);
  CHECK(kObsDim == 136);
  CHECK(kActionDim == 16);
  CHECK(frame::kCpg + 2 == kFrameDim);
  LocomotionEnv env(plain_config());
  const auto obs = env.reset(1);
  CHECK(obs.size() == 136);
  // Reset fills every slot of the stack with the first frame.
  for (int s = 1; s < kStackDepth; ++s)
    for (int i = 0; i < kFrameDim; ++i) CHECK(obs[s * kFrameDim + i] == obs[i]);
}

TEST_CASE("reward: worked example and exact decomposition") {
  BodyPose prev, pose;
  prev.x_bar = 1.0;
  pose.x_bar = 1.01;
  pose.yaw = 0.1;
  pose.z = 0.12;
  pose.roll = 0.1;
  pose.pitch = -0.2;
  const std::vector<double> dp{0.5, -0.5};
  const RewardWeights w{100.0, 0.5, 5.0, 2.0, 0.05};
  const RewardBreakdown r = reward(prev, pose, dp, 0.0, 0.125, w);
  CHECK(r.progress == doctest::Approx(-0.01));
  CHECK(r.yaw == doctest::Approx(0.01));
  CHECK(r.height == doctest::Approx(0.005));
  CHECK(r.orientation == doctest::Approx(0.05));
  CHECK(r.smooth == doctest::Approx(0.5));
  // 1 - (100(-0.01) + 0.5(0.01) + 5(0.005) + 2(0.05) + 0.05(0.5)) = 1.845
  CHECK(r.total == doctest::Approx(1.845));
  CHECK(r.total == 1.0 - (w.progress * r.progress + w.yaw * r.yaw + w.height * r.height +
                          w.orientation * r.orientation + w.smooth * r.smooth));

  // Yaw error wraps across ±π.
  pose.yaw = std::numbers::pi - 0.05;
  CHECK(reward(prev, pose, dp, -std::numbers::pi + 0.05, 0.125, w).yaw == doctest::Approx(0.01));
}

TEST_CASE("reward decomposition holds on random inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    BodyPose a, b;
    a.x_bar = u(rng);
    b.x_bar = u(rng);
    b.yaw = 3 * u(rng);
    b.z = 0.2 * u(rng);
    b.roll = u(rng);
    b.pitch = u(rng);
    std::vector<double> dp(12);
    for (double& d : dp) d = u(rng);
    RewardWeights w{10 * (u(rng) + 1), u(rng) + 1, u(rng) + 1, u(rng) + 1, u(rng) + 1};
    const RewardBreakdown r = reward(a, b, dp, u(rng), 0.125, w);
    const double sum = w.progress * r.progress + w.yaw * r.yaw + w.height * r.height +
                       w.orientation * r.orientation + w.smooth * r.smooth;
    CHECK(r.total == 1.0 - sum);
    CHECK(r.yaw <= std::numbers::pi * std::numbers::pi + 1e-12);
    CHECK(r.smooth >= 0.0);
  }
}

TEST_CASE("reset with the same seed is bit-for-bit reproducible") {
  EnvConfig cfg;
  LocomotionEnv a(cfg), b(cfg);
  CHECK(a.reset(11) == b.reset(11));
  for (int k = 0; k < 5; ++k) {
    const auto act = ref_action(a);
    const StepResult ra = a.step(act);
    const StepResult rb = b.step(act);
    CHECK(ra.obs == rb.obs);
    CHECK(ra.reward == rb.reward);
  }
  LocomotionEnv c(cfg);
  CHECK(c.reset(12) != a.reset(11));
}

TEST_CASE("randomization off leaves the nominal model") {
  EnvConfig cfg = plain_config();
  cfg.incline_deg = 2.5;
  std::mt19937_64 rng(1);
  const EpisodeParams p = sample_episode(cfg.randomization, cfg.incline_deg, rng);
  SimConfig sim = cfg.sim;
  const RobotModel m = apply_episode(cfg.robot, p, sim);
  CHECK(p.incline_deg == 2.5);
  for (int l = 0; l < kNumLegs; ++l) {
    CHECK(m.legs[l].n_segments == cfg.robot.legs[l].n_segments);
    CHECK(m.legs[l].mass == cfg.robot.legs[l].mass);
    CHECK(m.legs[l].base_stiffness == cfg.robot.legs[l].base_stiffness);
    CHECK(m.legs[l].base_damping == cfg.robot.legs[l].base_damping);
    CHECK(m.legs[l].alpha_expand == cfg.robot.legs[l].alpha_expand);
  }
  CHECK(sim.contact.suction_force_max == cfg.sim.contact.suction_force_max);
  CHECK(m.ground.normal.z() == doctest::Approx(std::cos(2.5 * std::numbers::pi / 180)));
}

TEST_CASE("1000 randomized draws cover every link count and stay in range") {
  const RandomizationConfig r;
  std::mt19937_64 rng(5);
  std::set<int> counts;
  for (int k = 0; k < 1000; ++k) {
    const EpisodeParams p = sample_episode(r, 0.0, rng);
    for (int l = 0; l < kNumLegs; ++l) {
      counts.insert(p.segments[l]);
      CHECK(p.mass[l] >= 0.8);
      CHECK(p.mass[l] <= 1.2);
      CHECK(p.stiffness[l] >= 0.8);
      CHECK(p.stiffness[l] <= 1.2);
      CHECK(p.damping[l] >= 0.8);
      CHECK(p.damping[l] <= 1.2);
      CHECK(p.hysteresis[l] >= 0.7);
      CHECK(p.hysteresis[l] <= 1.3);
    }
    CHECK(p.suction >= 0.8);
    CHECK(p.suction <= 1.2);
  }
  CHECK(counts == std::set<int>{5, 6, 7});
}

TEST_CASE("randomized resets produce standing robots") {
  EnvConfig cfg;
  cfg.randomization.inclines_deg = {0.0, 2.5, 5.0};
  LocomotionEnv env(cfg);
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto obs = env.reset(seed);
    for (double x : obs) CHECK(std::isfinite(x));
    const BodyPose p = env.sim().pose(env.travel_axis());
    CHECK(p.z > 0.5 * cfg.robot.z_ref);
  }
}

TEST_CASE("invalid configuration and actions are rejected") {
  EnvConfig bad = plain_config();
  bad.randomization.segments = {4, 7};
  CHECK_THROWS_AS(LocomotionEnv{bad}, ConfigError);
  bad = plain_config();
  bad.weights.smooth = -1;
  CHECK_THROWS_AS(LocomotionEnv{bad}, ConfigError);
  bad = plain_config();
  bad.grf_source = GrfSource::Tactile;
  CHECK_THROWS_AS(LocomotionEnv{bad}, ConfigError);

  LocomotionEnv env(plain_config());
  CHECK_THROWS_AS(env.step(std::vector<double>(16, 0.0)), ModelError);  // before reset
  env.reset(0);
  CHECK_THROWS_AS(env.step(std::vector<double>(15, 0.0)), ModelError);
  std::vector<double> nan(16, 0.0);
  nan[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(env.step(nan), ModelError);
}

TEST_CASE("noise has the configured standard deviation") {
  const NoiseConfig noise;
  std::mt19937_64 rng(8);
  FrameSignals s;
  std::vector<double> roll, rate, grf, accel;
  for (int k = 0; k < 20000; ++k) {
    const Frame f = make_frame(s, noise, rng);
    roll.push_back(f[frame::kEuler]);
    rate.push_back(f[frame::kOmega + 2]);
    grf.push_back(f[frame::kGrf + 1]);
    accel.push_back(f[frame::kAccel]);
  }
  CHECK(stddev(roll) == doctest::Approx(noise.angle_std).epsilon(0.03));
  CHECK(stddev(rate) == doctest::Approx(noise.rate_std).epsilon(0.03));
  CHECK(stddev(grf) == doctest::Approx(noise.grf_std).epsilon(0.03));
  CHECK(stddev(accel) == 0.0);
}

TEST_CASE("noise-free frame carries the raw signals in order") {
  FrameSignals s;
  s.pose.roll = 0.1;
  s.pose.pitch = 0.2;
  s.pose.yaw = 0.3;
  s.pose.omega_body = Vec3(1, 2, 3);
  s.pose.linear_accel = Vec3(4, 5, 6);
  s.grf = {7, 8, 9, 10};
  for (int c = 0; c < kNumChambers; ++c) s.pressure[c] = 20 + c;
  s.suction = {0.1, 0.2, 0.3, 0.4};
  s.goal = {2, 0.5, -0.1};
  s.cpg = {0.6, 0.8};
  std::mt19937_64 rng(0);
  const Frame f = make_frame(s, NoiseConfig{0, 0, 0}, rng);
  const Frame expect{0.1, 0.2, 0.3, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 21, 22, 23, 24, 25, 26,
                     27, 28, 29, 30, 31, 0.1, 0.2, 0.3, 0.4, 2, 0.5, -0.1, 0.6, 0.8};
  CHECK(f == expect);
}

TEST_CASE("step shifts the stack and truncates at the step budget") {
  EnvConfig cfg = plain_config();
  cfg.episode_steps = 3;
  LocomotionEnv env(cfg);
  auto obs = env.reset(2);
  for (int k = 0; k < 3; ++k) {
    const StepResult r = env.step(ref_action(env));
    for (int s = 0; s + 1 < kStackDepth; ++s)
      for (int i = 0; i < kFrameDim; ++i) CHECK(r.obs[s * kFrameDim + i] == obs[(s + 1) * kFrameDim + i]);
    for (int i = 0; i < kFrameDim; ++i) CHECK(r.obs[(kStackDepth - 1) * kFrameDim + i] == env.last_frame()[i]);
    CHECK_FALSE(r.terminated);
    CHECK(r.truncated == (k == 2));
    CHECK(r.info.time == doctest::Approx(0.5 * (k + 1)));
    obs = r.obs;
  }
  CHECK(env.done());
  CHECK_THROWS_AS(env.step(std::vector<double>(16, 0.0)), ModelError);
}

TEST_CASE("tipping past the fall angle terminates the episode") {
  LocomotionEnv env(plain_config());
  env.reset(4);
  TreeState s = env.sim().state();
  s.base_orientation = Quat(Eigen::AngleAxisd(70.0 * std::numbers::pi / 180, Vec3::UnitX()));
  env.set_state(s);
  const StepResult r = env.step(std::vector<double>(16, 0.0));
  CHECK(r.terminated);
  CHECK_FALSE(r.truncated);
  CHECK(r.info.fell);
}

TEST_CASE("smoothness term uses the applied increment in action units") {
  LocomotionEnv env(plain_config());
  env.reset(6);
  std::vector<double> a(16, 0.0);
  a[0] = 0.5;
  a[1] = -0.25;
  const auto before = env.sim().pneumatics().commanded;
  const StepResult r = env.step(a);
  const auto after = env.sim().pneumatics().commanded;
  double expect = 0.0;
  for (int c = 0; c < kNumChambers; ++c) {
    const double d = (after[c] - before[c]) / env.config().sim.pneumatic.dp_max_kpa;
    expect += d * d;
  }
  CHECK(r.info.reward.smooth == doctest::Approx(expect));
  CHECK(expect == doctest::Approx(0.25 + 0.0625));
}

TEST_CASE("reference gait through the environment gains reward and ground") {
  LocomotionEnv env(plain_config());
  env.reset(0);
  double ret = 0.0;
  for (int k = 0; k < 40; ++k) ret += env.step(ref_action(env)).reward;
  CHECK(env.sim().pose(env.travel_axis()).x_bar - env.start_x() > 0.01);
  CHECK(ret > 0.0);
  // Goal lies ahead along the body x axis.
  CHECK(env.last_frame()[frame::kGoal] > 1.5);
}

TEST_CASE("noise ablation replaces IMU and GRF channels") {
  EnvConfig cfg = plain_config();
  cfg.imu_grf_noise = true;
  LocomotionEnv env(cfg);
  std::vector<double> v;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    env.reset(seed);
    for (int k = 0; k < 10; ++k) {
      env.step(ref_action(env));
      for (int i = frame::kEuler; i < frame::kPressure; ++i) v.push_back(env.last_frame()[i]);
    }
  }
  CHECK(stddev(v) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("suction ablation disables anchoring") {
  EnvConfig cfg = plain_config();
  cfg.suction_disabled = true;
  LocomotionEnv env(cfg);
  env.reset(0);
  for (int k = 0; k < 4; ++k) {
    const StepResult r = env.step(ref_action(env));
    for (bool e : r.info.suction_engaged) CHECK_FALSE(e);
  }
}

TEST_CASE("tactile GRF source feeds estimator output into the frame") {
  EnvConfig cfg = plain_config();
  cfg.grf_source = GrfSource::Tactile;
  cfg.randomization.noise = NoiseConfig{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(LocomotionEnv(cfg, nullptr), ConfigError);

  const auto data = generate_calibration_data(HallSensorModel{}, CalibrationProtocol{}, 42);
  EstimatorReport rep;
  auto est = std::make_shared<const ForceEstimator>(train_force_estimator(data, EstimatorTraining{}, &rep));
  LocomotionEnv env(cfg, est);
  env.reset(0);
  double err = 0.0, load = 0.0;
  int n = 0;
  for (int k = 0; k < 24; ++k) {
    const StepResult r = env.step(ref_action(env));
    for (int l = 0; l < kNumLegs; ++l) {
      CHECK(std::isfinite(r.info.grf_estimate[l]));
      CHECK(env.last_frame()[frame::kGrf + l] == doctest::Approx(r.info.grf_estimate[l]).epsilon(1e-12));
      err += std::abs(r.info.grf_estimate[l] - r.info.grf_true[l]);
      load += r.info.grf_true[l];
      ++n;
    }
  }
  MESSAGE("tactile GRF mean abs error " << err / n << " N, mean load " << load / n << " N");
  CHECK(err / n < 0.2 * load / n);
}
