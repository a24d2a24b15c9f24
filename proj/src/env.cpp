#include "softquad/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "softquad/error.hpp"

namespace softquad {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void check_range(const std::array<double, 2>& r, const char* name) {
  if (!(r[0] > 0.0) || !(r[1] >= r[0]) || !std::isfinite(r[1]))
    throw ConfigError(std::string("randomization range '") + name + "' must satisfy 0 < lo <= hi");
}

double draw(const std::array<double, 2>& r, std::mt19937_64& rng) {
  if (r[0] == r[1]) return r[0];
  return std::uniform_real_distribution<double>(r[0], r[1])(rng);
}

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

}  // namespace

void validate(const RewardWeights& w) {
  for (double v : {w.progress, w.yaw, w.height, w.orientation, w.smooth})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("reward weights must be finite and non-negative");
}

RewardBreakdown reward(const BodyPose& prev, const BodyPose& pose, std::span<const double> dp, double yaw_goal,
                       double z_ref, const RewardWeights& w) {
  RewardBreakdown r;
  r.progress = -(pose.x_bar - prev.x_bar);
  const double e = wrap_angle(pose.yaw - yaw_goal);
  r.yaw = e * e;
  r.height = std::abs(pose.z - z_ref);
  r.orientation = pose.roll * pose.roll + pose.pitch * pose.pitch;
  for (double d : dp) r.smooth += d * d;
  r.total = 1.0 - (w.progress * r.progress + w.yaw * r.yaw + w.height * r.height + w.orientation * r.orientation +
                   w.smooth * r.smooth);
  return r;
}

void validate(const RandomizationConfig& r) {
  check_range(r.mass, "mass");
  check_range(r.stiffness, "stiffness");
  check_range(r.damping, "damping");
  check_range(r.hysteresis, "hysteresis");
  check_range(r.suction, "suction");
  if (r.segments[0] < kMinSegments || r.segments[1] > kMaxSegments || r.segments[0] > r.segments[1])
    throw ConfigError("segment range must lie within [5, 7]");
  if (r.inclines_deg.empty()) throw ConfigError("incline set must not be empty");
  for (double a : r.inclines_deg)
    if (!std::isfinite(a) || std::abs(a) > 30.0) throw ConfigError("inclines must lie within ±30 degrees");
  for (double s : {r.noise.grf_std, r.noise.angle_std, r.noise.rate_std})
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("noise std must be finite and non-negative");
}

void validate(const EnvConfig& cfg) {
  validate(cfg.robot);
  validate(cfg.sim.contact);
  validate(cfg.weights);
  validate(cfg.randomization);
  validate(cfg.hall);
  if (cfg.episode_steps < 1) throw ConfigError("episode_steps must be positive");
  if (!(cfg.settle_time >= 0.0)) throw ConfigError("settle_time must be non-negative");
  if (!(cfg.fall_angle_deg > 0.0 && cfg.fall_angle_deg < 90.0)) throw ConfigError("fall angle must be in (0, 90)");
  if (!(cfg.fall_height_fraction >= 0.0 && cfg.fall_height_fraction < 1.0))
    throw ConfigError("fall height fraction must be in [0, 1)");
  if (!(cfg.goal_distance > 0.0)) throw ConfigError("goal distance must be positive");
  if (!std::isfinite(cfg.incline_deg) || std::abs(cfg.incline_deg) > 30.0)
    throw ConfigError("incline must lie within ±30 degrees");
  cfg.sim.pneumatic.inner_steps();
  cfg.sim.pneumatic.physics_steps();
}

EpisodeParams sample_episode(const RandomizationConfig& r, double fixed_incline_deg, std::mt19937_64& rng) {
  EpisodeParams p;
  if (!r.enabled) {
    p.incline_deg = fixed_incline_deg;
    return p;
  }
  std::uniform_int_distribution<int> seg(r.segments[0], r.segments[1]);
  for (int l = 0; l < kNumLegs; ++l) {
    p.segments[l] = seg(rng);
    p.mass[l] = draw(r.mass, rng);
    p.stiffness[l] = draw(r.stiffness, rng);
    p.damping[l] = draw(r.damping, rng);
    p.hysteresis[l] = draw(r.hysteresis, rng);
  }
  p.suction = draw(r.suction, rng);
  const auto n = static_cast<int>(r.inclines_deg.size());
  p.incline_deg = r.inclines_deg[std::uniform_int_distribution<int>(0, n - 1)(rng)];
  return p;
}

RobotModel apply_episode(const RobotModel& nominal, const EpisodeParams& p, SimConfig& sim) {
  RobotModel m = nominal;
  for (int l = 0; l < kNumLegs; ++l) {
    LegModel& leg = m.legs[l];
    leg.n_segments = p.segments[l];
    leg.mass *= p.mass[l];
    leg.cup_mass *= p.mass[l];
    for (double& k : leg.base_stiffness) k *= p.stiffness[l];
    for (double& d : leg.base_damping) d *= p.damping[l];
    // Stronger hysteresis means a slower filter.
    for (double& a : leg.alpha_expand) a = std::min(1.0, a / p.hysteresis[l]);
    for (double& a : leg.alpha_contract) a = std::min(1.0, a / p.hysteresis[l]);
  }
  m.ground = Plane::inclined(p.incline_deg * kDeg);
  sim.contact.suction_force_max *= p.suction;
  validate(m);
  return m;
}

Frame make_frame(const FrameSignals& s, const NoiseConfig& noise, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Frame f{};
  const double euler[3] = {s.pose.roll, s.pose.pitch, s.pose.yaw};
  for (int i = 0; i < 3; ++i) f[frame::kEuler + i] = euler[i] + noise.angle_std * g(rng);
  for (int i = 0; i < 3; ++i) f[frame::kOmega + i] = s.pose.omega_body[i] + noise.rate_std * g(rng);
  for (int i = 0; i < 3; ++i) f[frame::kAccel + i] = s.pose.linear_accel[i];
  for (int l = 0; l < kNumLegs; ++l) f[frame::kGrf + l] = s.grf[l] + noise.grf_std * g(rng);
  for (int c = 0; c < kNumChambers; ++c) f[frame::kPressure + c] = s.pressure[c];
  for (int l = 0; l < kNumLegs; ++l) f[frame::kSuction + l] = s.suction[l];
  for (int i = 0; i < 3; ++i) f[frame::kGoal + i] = s.goal[i];
  f[frame::kCpg] = s.cpg[0];
  f[frame::kCpg + 1] = s.cpg[1];
  return f;
}

const Frame& frame_scale() {
  static const Frame scale = [] {
    Frame s{};
    for (int i = 0; i < 3; ++i) s[frame::kEuler + i] = 2.0;
    for (int i = 0; i < 3; ++i) s[frame::kOmega + i] = 1.0;
    for (int i = 0; i < 3; ++i) s[frame::kAccel + i] = 0.1;
    for (int l = 0; l < kNumLegs; ++l) s[frame::kGrf + l] = 0.1;
    for (int c = 0; c < kNumChambers; ++c) s[frame::kPressure + c] = 1.0 / 30.0;
    for (int l = 0; l < kNumLegs; ++l) s[frame::kSuction + l] = 1.0;
    s[frame::kGoal] = 0.5;
    s[frame::kGoal + 1] = 5.0;
    s[frame::kGoal + 2] = 2.0;
    s[frame::kCpg] = 1.0;
    s[frame::kCpg + 1] = 1.0;
    return s;
  }();
  return scale;
}

LocomotionEnv::LocomotionEnv(EnvConfig cfg, std::shared_ptr<const ForceEstimator> estimator)
    : cfg_(std::move(cfg)), estimator_(std::move(estimator)) {
  validate(cfg_);
  if (cfg_.grf_source == GrfSource::Tactile && !estimator_)
    throw ConfigError("tactile GRF source needs a trained force estimator");
  gait_ = make_reference_gait(cfg_.gait, cfg_.sim.pneumatic);
  gait_.validate(cfg_.sim.contact.s_min);
}

std::vector<double> LocomotionEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  params_ = sample_episode(cfg_.randomization, cfg_.incline_deg, rng_);
  SimConfig sim_cfg = cfg_.sim;
  if (cfg_.suction_disabled) sim_cfg.contact.suction_enabled = false;
  const RobotModel model = apply_episode(cfg_.robot, params_, sim_cfg);
  sim_ = std::make_unique<Simulator>(model, sim_cfg);
  const GaitKeyframe k0 = gait_.evaluate(0.0);
  sim_->set_actuation(k0.pressure, k0.suction);
  sim_->place_on_ground(cfg_.settle_time);

  const double a = params_.incline_deg * kDeg;
  travel_axis_ = Vec3(std::cos(a), 0.0, std::sin(a));
  prev_pose_ = sim_->pose(travel_axis_);
  start_x_ = prev_pose_.x_bar;
  goal_ = sim_->state().base_position + cfg_.goal_distance * travel_axis_;
  cpg_ = CpgState{0.0, 2.0 * std::numbers::pi / gait_.period};

  hall_ = {};
  cups_.clear();
  if (cfg_.grf_source == GrfSource::Tactile) {
    cups_ = make_cup_models(cfg_.hall, kNumLegs, 0.03, rng_);
    // Bring the sensor memory to the standing load.
    for (int k = 0; k < 50; ++k)
      for (int l = 0; l < kNumLegs; ++l)
        hall_signal(sim_->mean_grf()[l], cups_[l], hall_[l], cfg_.sim.pneumatic.dt_inner, load_shares(false, 0),
                    nullptr);
  }
  steps_ = 0;
  done_ = false;
  const Frame f = observe();
  stack_.assign(kStackDepth, f);
  return stacked();
}

void LocomotionEnv::set_state(const TreeState& s) {
  if (!sim_) throw ModelError("set_state before reset");
  sim_->set_state(s);
}

Frame LocomotionEnv::observe() {
  FrameSignals s;
  s.pose = sim_->pose(travel_axis_);
  for (int l = 0; l < kNumLegs; ++l) {
    if (cfg_.grf_source == GrfSource::Tactile) {
      const auto r = hall_signal(sim_->mean_grf()[l], cups_[l], hall_[l], 0.0, load_shares(false, 0), &rng_);
      grf_estimate_[l] = estimator_->estimate(r.readings);
    } else {
      grf_estimate_[l] = sim_->mean_grf()[l];
    }
    s.grf[l] = grf_estimate_[l];
  }
  s.pressure = sim_->pneumatics().commanded;
  s.suction = sim_->pneumatics().suction;
  const Vec3 d = sim_->state().base_position;
  const Mat3 r = sim_->state().base_orientation.toRotationMatrix();
  const Vec3 to_goal = r.transpose() * (goal_ - d);
  const double yaw_goal = std::atan2(goal_.y() - d.y(), goal_.x() - d.x());
  s.goal = {to_goal.x(), to_goal.y(), wrap_angle(s.pose.yaw - yaw_goal)};
  s.cpg = cpg_signal(cpg_);
  Frame f = make_frame(s, cfg_.randomization.noise, rng_);
  if (cfg_.imu_grf_noise) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = frame::kEuler; i < frame::kPressure; ++i) f[i] = g(rng_);
  }
  last_frame_ = f;
  return f;
}

std::vector<double> LocomotionEnv::stacked() const {
  std::vector<double> out;
  out.reserve(kObsDim);
  for (const Frame& f : stack_) out.insert(out.end(), f.begin(), f.end());
  return out;
}

StepResult LocomotionEnv::step(std::span<const double> action) {
  if (done_) throw ModelError("step called on a finished episode; call reset first");
  if (static_cast<int>(action.size()) != kActionDim)
    throw ModelError("action must have 16 entries, got " + std::to_string(action.size()));
  const PneumaticConfig& pc = cfg_.sim.pneumatic;
  const auto before = sim_->pneumatics().commanded;
  sim_->apply_action(action);
  std::array<double, kNumChambers> dp{};
  for (int c = 0; c < kNumChambers; ++c) dp[c] = (sim_->pneumatics().commanded[c] - before[c]) / pc.dp_max_kpa;

  StepResult out;
  const Vec3 d = sim_->state().base_position;
  const double yaw_goal = std::atan2(goal_.y() - d.y(), goal_.x() - d.x());
  try {
    const int n = pc.inner_steps();
    for (int k = 0; k < n; ++k) {
      sim_->run_inner_period();
      if (cfg_.grf_source == GrfSource::Tactile)
        for (int l = 0; l < kNumLegs; ++l)
          hall_signal(sim_->mean_grf()[l], cups_[l], hall_[l], pc.dt_inner, load_shares(false, 0), nullptr);
    }
  } catch (const IntegrationError&) {
    out.info.sim_failure = true;
  }
  ++steps_;
  cpg_ = cpg_advance(cpg_, pc.dt_cmd);

  StepInfo& info = out.info;
  info.time = time();
  if (info.sim_failure) {
    info.pose = prev_pose_;
    info.fell = true;
    info.reward = reward(prev_pose_, prev_pose_, dp, yaw_goal, cfg_.robot.z_ref, cfg_.weights);
    out.reward = info.reward.total;
    out.terminated = true;
    done_ = true;
    out.obs = stacked();
    return out;
  }

  info.pose = sim_->pose(travel_axis_);
  info.reward = reward(prev_pose_, info.pose, dp, yaw_goal, cfg_.robot.z_ref, cfg_.weights);
  for (int l = 0; l < kNumLegs; ++l) {
    info.grf_true[l] = sim_->mean_grf()[l];
    info.suction_engaged[l] = sim_->contact().feet[l].suction_engaged;
  }
  const double lim = cfg_.fall_angle_deg * kDeg;
  info.fell = std::abs(info.pose.roll) > lim || std::abs(info.pose.pitch) > lim ||
              info.pose.z < cfg_.fall_height_fraction * cfg_.robot.z_ref;
  prev_pose_ = info.pose;

  const Frame f = observe();
  info.grf_estimate = grf_estimate_;
  stack_.erase(stack_.begin());
  stack_.push_back(f);
  out.obs = stacked();
  out.reward = info.reward.total;
  out.terminated = info.fell;
  out.truncated = !info.fell && steps_ >= cfg_.episode_steps;
  done_ = out.terminated || out.truncated;
  return out;
}

}  // namespace softquad
