#pragma once

// Staged training: demonstrations from the reference gait, behavior cloning,
// SAC fine-tuning with a frozen-actor warm-up, evaluation and ablations.
// Rollouts run on OpenMP workers; `run_episodes_serial` is the reference.

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "softquad/sac.hpp"
#include "softquad/tasks.hpp"

namespace softquad::learn {

// ---- rollouts

struct EpisodeSpec {
  std::uint64_t env_seed = 0;
  std::uint64_t noise_seed = 0;
};

struct Transition {
  std::vector<double> obs, action, next_obs;
  double reward = 0.0;
  bool terminal = false;
};

struct EpisodeResult {
  double ret = 0.0;
  int steps = 0;
  bool fell = false;
  double displacement = 0.0;  // progress() at the end
  double duration = 0.0;      // s
  double mean_tilt = 0.0;     // mean |roll| + |pitch|
  std::vector<Transition> transitions;
  std::vector<StepInfo> infos;
  std::vector<std::vector<double>> actions;

  double speed() const { return duration > 0.0 ? displacement / duration : 0.0; }
};

struct RolloutOptions {
  bool deterministic = false;
  bool keep_transitions = true;
  bool keep_log = false;
};

template <class T>
EpisodeResult run_episode(Environment& env, const nn::Mlp<T>& actor, const EpisodeSpec& spec,
                          const RolloutOptions& opt);

/// Episodes in parallel on up to `workers` threads, one environment per
/// thread; results are ordered as `specs` and independent of `workers`.
template <class T>
std::vector<EpisodeResult> run_episodes(const EnvFactory& make_env, const nn::Mlp<T>& actor,
                                        const std::vector<EpisodeSpec>& specs, const RolloutOptions& opt,
                                        int workers);

template <class T>
std::vector<EpisodeResult> run_episodes_serial(const EnvFactory& make_env, const nn::Mlp<T>& actor,
                                               const std::vector<EpisodeSpec>& specs, const RolloutOptions& opt);

/// Seed for episode `index` of a run seeded with `seed`, with a stream tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// ---- demonstrations and behavior cloning

struct Demonstrations {
  std::vector<std::vector<double>> obs;  // scaled stacked observations
  std::vector<std::vector<double>> action;
  std::vector<int> episode;
  std::vector<int> step;
  int discarded = 0;

  std::size_t size() const { return obs.size(); }
};

/// Runs the reference gait with domain randomization; episodes that fall are
/// discarded and counted.
Demonstrations collect_demonstrations(const EnvConfig& cfg, int episodes, std::uint64_t seed, int workers = 1);

struct BcConfig {
  int epochs = 150;
  int batch = 256;
  double lr = 1e-3;
  double final_lr = 3e-5;
  double validation_fraction = 0.1;
  double init_log_std = -1.0;
  int patience = 0;  // 0: no early abort
};

struct BcReport {
  double train_mse = 0.0;
  double validation_mse = 0.0;
  double linear_validation_mse = 0.0;  // least-squares linear policy on the same split
  std::vector<double> validation_curve;
  int train_samples = 0;
  int validation_samples = 0;
};

/// Fits tanh(mean head) to the demo actions by MSE and then sets the log-std
/// head to `init_log_std`. Throws TrainingError when the validation loss never
/// improves over the run.
template <class T>
BcReport behavior_clone(const Demonstrations& demos, nn::Mlp<T>& actor, const BcConfig& cfg, std::uint64_t seed);

// ---- SAC training loop

struct SacLoopConfig {
  int episodes = 400;
  int warmup_episodes = 100;       // actor frozen
  double critic_lr_start = 3e-4;
  double critic_lr_end = 1e-4;
  int critic_lr_decay_episodes = 100;
  int episodes_per_round = 4;      // rollouts per parameter snapshot
  double updates_per_step = 1.0;
  int batch = 256;
  std::size_t buffer_capacity = 200000;
  std::size_t min_buffer = 1000;   // no updates before this many transitions
  int workers = 1;
  std::uint64_t seed = 1;
  int first_episode = 0;           // offset for episode seeds when continuing
};

void validate(const SacLoopConfig& cfg);

/// Critic rate at the start of episode `e`: linear from start to end over
/// the decay horizon, then constant.
double critic_lr_at(const SacLoopConfig& cfg, int episode);

struct CurveRecord {
  int episode = 0;
  double ret = 0.0;
  int steps = 0;
  bool fell = false;
  double speed = 0.0;
  bool actor_frozen = false;
  double critic_lr = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
  std::int64_t updates = 0;
};

void write_curve_header(std::ostream& os);
void write_curve_record(std::ostream& os, int seed, const CurveRecord& r);

using EpisodeCallback = std::function<void(const CurveRecord&)>;

/// Collects rounds of episodes with the current actor snapshot, inserts their
/// transitions in episode order and runs round(steps * updates_per_step)
/// updates after each round.
template <class T>
std::vector<CurveRecord> sac_train(const EnvFactory& make_env, SacAgent<T>& agent, ReplayBuffer<T>& buffer,
                                   const SacLoopConfig& cfg, const EpisodeCallback& on_episode = {});

// ---- evaluation and ablation

struct EvalMetrics {
  double mean_speed = 0.0;  // m/s
  double mean_tilt = 0.0;   // rad
  double fall_rate = 0.0;
  double mean_return = 0.0;
  std::vector<double> speeds;
  std::vector<EpisodeResult> episodes;
};

/// Deterministic actions on fixed evaluation seeds derived from `seed`.
template <class T>
EvalMetrics evaluate_policy(const EnvConfig& cfg, const nn::Mlp<T>& actor, int episodes, std::uint64_t seed,
                            int workers = 1, bool keep_log = false,
                            std::shared_ptr<const ForceEstimator> estimator = nullptr);

/// The reference gait evaluated like a policy.
EvalMetrics evaluate_reference_gait(const EnvConfig& cfg, int episodes, std::uint64_t seed, int workers = 1);

enum class AblationChannel { None, ImuGrfNoise, SuctionOff };

AblationChannel parse_channel(const std::string& name);
std::string channel_name(AblationChannel c);

struct AblationResult {
  EvalMetrics intact;
  EvalMetrics ablated;
  int lower = 0;  // paired episodes where the ablated speed is lower
  int ties = 0;
  double sign_test_p = 1.0;  // one-sided
};

template <class T>
AblationResult ablate(const EnvConfig& cfg, const nn::Mlp<T>& actor, AblationChannel channel, int episodes,
                      std::uint64_t seed, int workers = 1);

/// P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p(int k, int n);

/// Per-step episode log with a commented header line.
void write_episode_log(std::ostream& os, const EpisodeResult& ep);

}  // namespace softquad::learn
