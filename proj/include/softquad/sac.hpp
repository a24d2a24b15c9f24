#pragma once

// Soft Actor-Critic agent: squashed-Gaussian actor, twin critics with Polyak
// targets, and automatic entropy temperature.

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "softquad/checkpoint.hpp"
#include "softquad/nn.hpp"
#include "softquad/replay.hpp"

namespace softquad::learn {

struct SacConfig {
  std::vector<int> actor_hidden{128, 128};
  std::vector<int> critic_hidden{128, 128};
  nn::Activation hidden_activation = nn::Activation::Relu;
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  double initial_alpha = 0.05;
  bool auto_alpha = true;
  double target_entropy = std::numeric_limits<double>::quiet_NaN();  // NaN: -action_dim
  double divergence_threshold = 1e6;  // critic loss
  int divergence_window = 100;        // consecutive updates above the threshold
};

void validate(const SacConfig& cfg);

struct SacStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;  // -mean log π of fresh samples
  double q_mean = 0.0;
};

/// Actor output for one observation: tanh of the mean when deterministic,
/// otherwise a squashed sample with noise from `rng`.
template <class T>
std::vector<double> policy_action(const nn::Mlp<T>& actor, std::span<const double> obs, bool deterministic,
                                  std::mt19937_64& rng);

/// Actor network with a 2A-wide linear head (means, then log-stds).
template <class T>
nn::Mlp<T> make_actor(int obs_dim, int action_dim, const std::vector<int>& hidden, nn::Activation act,
                      std::mt19937_64& rng);

/// Sets the log-std head to a state-independent constant.
template <class T>
void set_log_std(nn::Mlp<T>& actor, double log_std);

template <class T>
class SacAgent {
 public:
  SacAgent(int obs_dim, int action_dim, const SacConfig& cfg, std::uint64_t seed);

  const SacConfig& config() const { return cfg_; }
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }

  const nn::Mlp<T>& actor() const { return actor_; }
  void set_actor(const nn::Mlp<T>& actor);
  const nn::Mlp<T>& critic(int i) const { return i == 0 ? q1_ : q2_; }
  const nn::Mlp<T>& target_critic(int i) const { return i == 0 ? q1_targ_ : q2_targ_; }
  nn::Mlp<T>& mutable_critic(int i) { return i == 0 ? q1_ : q2_; }

  double alpha() const { return std::exp(log_alpha_); }
  void set_alpha(double a) { log_alpha_ = std::log(a); }
  double critic_lr() const { return q1_opt_.cfg.lr; }
  void set_critic_lr(double lr);
  std::int64_t updates() const { return updates_; }

  /// Soft Bellman targets y = r + γ(1 - d)(min Q'(s', a') - α log π(a'|s'))
  /// with a' drawn using the given standard-normal noise (A x B).
  nn::Vector<T> critic_targets(const Batch<T>& b, const nn::Matrix<T>& next_noise) const;

  /// Q-values of both critics (2 x B) at the batch's stored actions.
  nn::Matrix<T> q_values(const nn::Matrix<T>& obs, const nn::Matrix<T>& action) const;

  /// One gradient step on both critics, then the actor and temperature unless
  /// `actor_frozen`, then the target networks. Throws TrainingError on
  /// non-finite values or sustained critic divergence.
  SacStats update(const Batch<T>& b, bool actor_frozen, std::mt19937_64& rng);

  void save(Checkpoint<T>& ck, const std::string& prefix) const;
  void load(const Checkpoint<T>& ck, const std::string& prefix);

 private:
  nn::Matrix<T> critic_input(const nn::Matrix<T>& obs, const nn::Matrix<T>& action) const;

  SacConfig cfg_;
  int obs_dim_;
  int action_dim_;
  double target_entropy_;
  nn::Mlp<T> actor_, q1_, q2_, q1_targ_, q2_targ_;
  nn::AdamState<T> actor_opt_, q1_opt_, q2_opt_;
  nn::ScalarAdam alpha_opt_;
  double log_alpha_;
  std::int64_t updates_ = 0;
  int diverged_ = 0;
};

}  // namespace softquad::learn
