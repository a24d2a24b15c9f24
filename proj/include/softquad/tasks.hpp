#pragma once

// Environment interface seen by the learners, the locomotion task adapter
// and two small tasks with known optimal solutions.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "softquad/env.hpp"

namespace softquad::learn {

struct EnvStep {
  std::vector<double> obs;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  std::optional<StepInfo> info;  // locomotion only
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  virtual EnvStep step(std::span<const double> action) = 0;
  /// Net progress since reset along the task's travel direction.
  virtual double progress() const { return 0.0; }
  virtual double elapsed_time() const { return 0.0; }
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

/// LocomotionEnv with observations multiplied by the fixed frame scale.
class LocomotionTask final : public Environment {
 public:
  explicit LocomotionTask(EnvConfig cfg, std::shared_ptr<const ForceEstimator> estimator = nullptr);
  int obs_dim() const override { return kObsDim; }
  int action_dim() const override { return kActionDim; }
  std::vector<double> reset(std::uint64_t seed) override;
  EnvStep step(std::span<const double> action) override;
  double progress() const override;
  double elapsed_time() const override { return env_.time(); }
  const LocomotionEnv& env() const { return env_; }

  /// Scaled stacked observation.
  static std::vector<double> scale(std::vector<double> obs);

 private:
  LocomotionEnv env_;
};

EnvFactory locomotion_factory(const EnvConfig& cfg, std::shared_ptr<const ForceEstimator> estimator = nullptr);

/// 1-DOF reach: x' = clamp(x + 0.2 a, -1, 1), r = 1 - |x'|, horizon 20,
/// x0 ~ U[-1, 1]. Observation is [x].
class ToyReach final : public Environment {
 public:
  static constexpr int kHorizon = 20;
  static constexpr double kGain = 0.2;
  int obs_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  std::vector<double> reset(std::uint64_t seed) override;
  EnvStep step(std::span<const double> action) override;
  void set_start(double x0) { x_ = x0; t_ = 0; }
  double position() const { return x_; }

  /// Optimal undiscounted return from x0.
  static double optimal_return(double x0);

 private:
  double x_ = 0.0;
  int t_ = 0;
};

/// Two states that alternate regardless of the action; reward depends only on
/// the state. Observation is the one-hot state, no terminal states.
class TwoStateMdp final : public Environment {
 public:
  TwoStateMdp(double r0, double r1) : reward_{r0, r1} {}
  int obs_dim() const override { return 2; }
  int action_dim() const override { return 1; }
  std::vector<double> reset(std::uint64_t seed) override;
  EnvStep step(std::span<const double> action) override;
  int state() const { return s_; }
  double state_reward(int s) const { return reward_[s]; }

  /// Value iteration for the state values under discount gamma.
  std::array<double, 2> value_iteration(double gamma, double tol = 1e-14) const;

 private:
  std::array<double, 2> reward_;
  int s_ = 0;
};

}  // namespace softquad::learn
