#include "softquad/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "softquad/error.hpp"

namespace softquad::learn {

LocomotionTask::LocomotionTask(EnvConfig cfg, std::shared_ptr<const ForceEstimator> estimator)
    : env_(std::move(cfg), std::move(estimator)) {}

std::vector<double> LocomotionTask::scale(std::vector<double> obs) {
  const Frame& s = frame_scale();
  for (std::size_t i = 0; i < obs.size(); ++i) obs[i] *= s[i % kFrameDim];
  return obs;
}

std::vector<double> LocomotionTask::reset(std::uint64_t seed) { return scale(env_.reset(seed)); }

EnvStep LocomotionTask::step(std::span<const double> action) {
  StepResult r = env_.step(action);
  EnvStep out;
  out.obs = scale(std::move(r.obs));
  out.reward = r.reward;
  out.terminated = r.terminated;
  out.truncated = r.truncated;
  out.info = r.info;
  return out;
}

double LocomotionTask::progress() const { return env_.sim().pose(env_.travel_axis()).x_bar - env_.start_x(); }

EnvFactory locomotion_factory(const EnvConfig& cfg, std::shared_ptr<const ForceEstimator> estimator) {
  return [cfg, estimator] { return std::make_unique<LocomotionTask>(cfg, estimator); };
}

std::vector<double> ToyReach::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  x_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  t_ = 0;
  return {x_};
}

EnvStep ToyReach::step(std::span<const double> action) {
  if (action.size() != 1 || !std::isfinite(action[0])) throw ModelError("toy reach takes one finite action");
  if (t_ >= kHorizon) throw ModelError("toy reach episode is over");
  const double a = std::clamp(action[0], -1.0, 1.0);
  x_ = std::clamp(x_ + kGain * a, -1.0, 1.0);
  ++t_;
  EnvStep out;
  out.obs = {x_};
  out.reward = 1.0 - std::abs(x_);
  out.truncated = t_ >= kHorizon;
  return out;
}

double ToyReach::optimal_return(double x0) {
  double ret = 0.0;
  for (int t = 0; t < kHorizon; ++t) ret += 1.0 - std::max(0.0, std::abs(x0) - kGain * (t + 1));
  return ret;
}

std::vector<double> TwoStateMdp::reset(std::uint64_t seed) {
  s_ = static_cast<int>(seed % 2);
  return {s_ == 0 ? 1.0 : 0.0, s_ == 1 ? 1.0 : 0.0};
}

EnvStep TwoStateMdp::step(std::span<const double> action) {
  if (action.size() != 1) throw ModelError("two-state MDP takes one action");
  EnvStep out;
  out.reward = reward_[s_];
  s_ = 1 - s_;
  out.obs = {s_ == 0 ? 1.0 : 0.0, s_ == 1 ? 1.0 : 0.0};
  return out;
}

std::array<double, 2> TwoStateMdp::value_iteration(double gamma, double tol) const {
  std::array<double, 2> v{0.0, 0.0};
  for (int it = 0; it < 100000; ++it) {
    const std::array<double, 2> next{reward_[0] + gamma * v[1], reward_[1] + gamma * v[0]};
    const double delta = std::max(std::abs(next[0] - v[0]), std::abs(next[1] - v[1]));
    v = next;
    if (delta < tol) break;
  }
  return v;
}

}  // namespace softquad::learn
