#include "softquad/learn.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <iostream>
#include <numeric>

#include "softquad/error.hpp"
#include "softquad/gait.hpp"

namespace softquad::learn {

using nn::Matrix;
using nn::Vector;

namespace {

using ActionFn = std::function<std::vector<double>(Environment&, const std::vector<double>&, std::mt19937_64&)>;

EpisodeResult run_with(Environment& env, const ActionFn& act, const EpisodeSpec& spec, const RolloutOptions& opt) {
  EpisodeResult out;
  std::mt19937_64 rng(spec.noise_seed);
  std::vector<double> obs = env.reset(spec.env_seed);
  double tilt = 0.0;
  for (;;) {
    std::vector<double> a = act(env, obs, rng);
    EnvStep r = env.step(a);
    out.ret += r.reward;
    ++out.steps;
    if (r.info) {
      tilt += std::abs(r.info->pose.roll) + std::abs(r.info->pose.pitch);
      if (opt.keep_log) out.infos.push_back(*r.info);
    }
    if (opt.keep_log) out.actions.push_back(a);
    const bool end = r.terminated || r.truncated;
    if (opt.keep_transitions)
      out.transitions.push_back({std::move(obs), std::move(a), r.obs, r.reward, r.terminated});
    obs = std::move(r.obs);
    if (end) {
      out.fell = r.terminated;
      break;
    }
  }
  out.mean_tilt = tilt / out.steps;
  out.displacement = env.progress();
  out.duration = env.elapsed_time();
  return out;
}

std::vector<EpisodeResult> run_serial(const EnvFactory& make_env, const ActionFn& act,
                                      const std::vector<EpisodeSpec>& specs, const RolloutOptions& opt) {
  std::vector<EpisodeResult> out(specs.size());
  if (specs.empty()) return out;
  auto env = make_env();
  for (std::size_t i = 0; i < specs.size(); ++i) out[i] = run_with(*env, act, specs[i], opt);
  return out;
}

std::vector<EpisodeResult> run_parallel(const EnvFactory& make_env, const ActionFn& act,
                                        const std::vector<EpisodeSpec>& specs, const RolloutOptions& opt,
                                        int workers) {
  const int n = static_cast<int>(specs.size());
  const int threads = std::max(1, std::min(workers, n));
  if (threads == 1) return run_serial(make_env, act, specs, opt);
  std::vector<EpisodeResult> out(n);
  std::exception_ptr error;
#pragma omp parallel num_threads(threads)
  {
    std::unique_ptr<Environment> env;
    try {
      env = make_env();
    } catch (...) {
#pragma omp critical(softquad_rollout_error)
      if (!error) error = std::current_exception();
    }
#pragma omp for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
      if (!env) continue;
      try {
        out[i] = run_with(*env, act, specs[i], opt);
      } catch (...) {
#pragma omp critical(softquad_rollout_error)
        if (!error) error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

template <class T>
ActionFn actor_fn(const nn::Mlp<T>& actor, bool deterministic) {
  return [&actor, deterministic](Environment&, const std::vector<double>& obs, std::mt19937_64& rng) {
    return policy_action(actor, obs, deterministic, rng);
  };
}

ActionFn reference_fn() {
  return [](Environment& env, const std::vector<double>&, std::mt19937_64&) {
    const auto& task = dynamic_cast<const LocomotionTask&>(env);
    const LocomotionEnv& e = task.env();
    const auto a = reference_action(e.reference_gait(), e.time(), e.sim().pneumatics(), e.config().sim.pneumatic);
    return std::vector<double>(a.begin(), a.end());
  };
}

EvalMetrics summarize(std::vector<EpisodeResult> eps) {
  EvalMetrics m;
  for (const auto& e : eps) {
    m.speeds.push_back(e.speed());
    m.mean_speed += e.speed();
    m.mean_tilt += e.mean_tilt;
    m.fall_rate += e.fell ? 1.0 : 0.0;
    m.mean_return += e.ret;
  }
  const double n = std::max<std::size_t>(1, eps.size());
  m.mean_speed /= n;
  m.mean_tilt /= n;
  m.fall_rate /= n;
  m.mean_return /= n;
  m.episodes = std::move(eps);
  return m;
}

std::vector<EpisodeSpec> eval_specs(int episodes, std::uint64_t seed) {
  std::vector<EpisodeSpec> specs(episodes);
  for (int i = 0; i < episodes; ++i) specs[i] = {derive_seed(seed, 7, i), derive_seed(seed, 8, i)};
  return specs;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over a mix of the three inputs
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull ^ (stream + 1) * 0xBF58476D1CE4E5B9ull ^ (index + 1) * 0x94D049BB133111EBull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <class T>
EpisodeResult run_episode(Environment& env, const nn::Mlp<T>& actor, const EpisodeSpec& spec,
                          const RolloutOptions& opt) {
  return run_with(env, actor_fn(actor, opt.deterministic), spec, opt);
}

template <class T>
std::vector<EpisodeResult> run_episodes(const EnvFactory& make_env, const nn::Mlp<T>& actor,
                                        const std::vector<EpisodeSpec>& specs, const RolloutOptions& opt,
                                        int workers) {
  return run_parallel(make_env, actor_fn(actor, opt.deterministic), specs, opt, workers);
}

template <class T>
std::vector<EpisodeResult> run_episodes_serial(const EnvFactory& make_env, const nn::Mlp<T>& actor,
                                               const std::vector<EpisodeSpec>& specs, const RolloutOptions& opt) {
  return run_serial(make_env, actor_fn(actor, opt.deterministic), specs, opt);
}

// ---- demonstrations and behavior cloning

Demonstrations collect_demonstrations(const EnvConfig& cfg, int episodes, std::uint64_t seed, int workers) {
  if (episodes < 1) throw ConfigError("collect_demonstrations needs at least one episode");
  std::vector<EpisodeSpec> specs(episodes);
  for (int i = 0; i < episodes; ++i) specs[i] = {derive_seed(seed, 1, i), derive_seed(seed, 2, i)};
  const auto eps = run_parallel(locomotion_factory(cfg), reference_fn(), specs, RolloutOptions{}, workers);
  Demonstrations d;
  for (int i = 0; i < episodes; ++i) {
    if (eps[i].fell) {
      ++d.discarded;
      std::cerr << "warning: demonstration episode " << i << " fell and was discarded\n";
      continue;
    }
    int step = 0;
    for (const auto& t : eps[i].transitions) {
      d.obs.push_back(t.obs);
      d.action.push_back(t.action);
      d.episode.push_back(i);
      d.step.push_back(step++);
    }
  }
  return d;
}

template <class T>
BcReport behavior_clone(const Demonstrations& demos, nn::Mlp<T>& actor, const BcConfig& cfg, std::uint64_t seed) {
  if (demos.size() == 0) throw TrainingError("behavior cloning needs a nonempty dataset");
  if (cfg.epochs < 1 || cfg.batch < 1 || !(cfg.lr > 0) || !(cfg.final_lr > 0))
    throw ConfigError("BC epochs, batch and rates must be positive");
  const int O = actor.input_width();
  const int A = actor.output_width() / 2;
  if (static_cast<int>(demos.obs[0].size()) != O || static_cast<int>(demos.action[0].size()) != A)
    throw ModelError("BC dataset does not match the actor's shape");

  // Split by episode so held-out samples come from unseen episodes.
  std::mt19937_64 rng(seed);
  std::vector<int> ids(demos.episode);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::shuffle(ids.begin(), ids.end(), rng);
  const int n_val_eps = ids.size() > 1
                            ? std::max(1, static_cast<int>(std::lround(cfg.validation_fraction * ids.size())))
                            : 0;
  const std::vector<int> val_ids(ids.begin(), ids.begin() + n_val_eps);
  std::vector<int> train, val;
  for (std::size_t i = 0; i < demos.size(); ++i)
    (std::find(val_ids.begin(), val_ids.end(), demos.episode[i]) != val_ids.end() ? val : train)
        .push_back(static_cast<int>(i));
  if (val.empty()) {
    // Single episode: hold out every tenth sample.
    std::vector<int> all = train;
    train.clear();
    for (std::size_t k = 0; k < all.size(); ++k) (k % 10 == 9 ? val : train).push_back(all[k]);
  }

  auto pack = [&](const std::vector<int>& idx, std::size_t from, std::size_t to, Matrix<T>& x, Matrix<T>& y) {
    const auto n = static_cast<Eigen::Index>(to - from);
    x.resize(O, n);
    y.resize(A, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const int i = idx[from + k];
      for (int r = 0; r < O; ++r) x(r, k) = T(demos.obs[i][r]);
      for (int r = 0; r < A; ++r) y(r, k) = T(demos.action[i][r]);
    }
  };
  Matrix<T> xv, yv, xt, yt;
  pack(val, 0, val.size(), xv, yv);
  pack(train, 0, train.size(), xt, yt);
  auto mse = [&](const Matrix<T>& x, const Matrix<T>& y) {
    const Matrix<T> mean = actor.forward(x).topRows(A).array().tanh();
    return double((mean - y).squaredNorm()) / double(y.size());
  };

  BcReport rep;
  rep.train_samples = static_cast<int>(train.size());
  rep.validation_samples = static_cast<int>(val.size());

  // Ridge-regularized linear policy on the same split.
  {
    const Eigen::Index n = xt.cols();
    Eigen::MatrixXd X(n, O + 1);
    X.leftCols(O) = xt.transpose().template cast<double>();
    X.col(O).setOnes();
    const Eigen::MatrixXd Y = yt.transpose().template cast<double>();
    Eigen::MatrixXd G = X.transpose() * X;
    G.diagonal().array() += 1e-6 * n;
    const Eigen::MatrixXd W = G.ldlt().solve(X.transpose() * Y);
    Eigen::MatrixXd Xv(xv.cols(), O + 1);
    Xv.leftCols(O) = xv.transpose().template cast<double>();
    Xv.col(O).setOnes();
    const Eigen::MatrixXd P = (Xv * W).cwiseMax(-1.0).cwiseMin(1.0);
    rep.linear_validation_mse = (P - yv.transpose().template cast<double>()).squaredNorm() / double(yv.size());
  }

  auto opt = nn::AdamState<T>::for_network(actor, {cfg.lr});
  const int batches = std::max<int>(1, (static_cast<int>(train.size()) + cfg.batch - 1) / cfg.batch);
  const double total = double(cfg.epochs) * batches;
  const double decay = std::pow(cfg.final_lr / cfg.lr, 1.0 / std::max(1.0, total - 1));
  const double initial = mse(xv, yv);
  double best = initial;
  nn::Mlp<T> best_net = actor;
  int since_best = 0;
  std::int64_t step = 0;
  Matrix<T> xb, yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (int b = 0; b < batches; ++b) {
      const std::size_t from = std::size_t(b) * cfg.batch;
      const std::size_t to = std::min(train.size(), from + cfg.batch);
      pack(train, from, to, xb, yb);
      opt.cfg.lr = cfg.lr * std::pow(decay, double(step++));
      nn::Tape<T> tape;
      const Matrix<T> head = actor.forward(xb, tape);
      Matrix<T> d = Matrix<T>::Zero(2 * A, xb.cols());
      const T scale = T(2) / T(xb.cols() * A);
      for (Eigen::Index k = 0; k < xb.cols(); ++k)
        for (int i = 0; i < A; ++i) {
          const T m = std::tanh(head(i, k));
          d(i, k) = scale * (m - yb(i, k)) * (T(1) - m * m);
        }
      auto g = actor.zero_gradients();
      actor.backward(tape, d, g);
      if (!g.all_finite()) throw TrainingError("behavior cloning: non-finite gradient");
      nn::adam_step(opt, actor, g);
    }
    const double v = mse(xv, yv);
    if (!std::isfinite(v)) throw TrainingError("behavior cloning: validation loss is not finite");
    rep.validation_curve.push_back(v);
    if (v < best) {
      best = v;
      best_net = actor;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  if (!(best < initial)) throw TrainingError("behavior cloning: validation loss never decreased");
  actor = best_net;
  set_log_std(actor, cfg.init_log_std);
  rep.validation_mse = best;
  rep.train_mse = mse(xt, yt);
  return rep;
}

// ---- SAC loop

void validate(const SacLoopConfig& c) {
  if (c.episodes < 0 || c.warmup_episodes < 0 || c.critic_lr_decay_episodes < 0)
    throw ConfigError("episode counts and the warm-up horizon must be non-negative");
  if (!(c.critic_lr_start > 0.0) || !(c.critic_lr_end > 0.0)) throw ConfigError("critic rates must be positive");
  if (c.episodes_per_round < 1 || c.batch < 1 || c.buffer_capacity < 1 || c.workers < 1)
    throw ConfigError("round size, batch, buffer and workers must be positive");
  if (!(c.updates_per_step >= 0.0)) throw ConfigError("updates_per_step must be non-negative");
}

double critic_lr_at(const SacLoopConfig& c, int episode) {
  if (c.critic_lr_decay_episodes == 0 || episode >= c.critic_lr_decay_episodes) return c.critic_lr_end;
  const double f = double(std::max(0, episode)) / c.critic_lr_decay_episodes;
  return c.critic_lr_start + (c.critic_lr_end - c.critic_lr_start) * f;
}

void write_curve_header(std::ostream& os) {
  os << "# seed episode return steps fell speed_m_s actor_frozen critic_lr critic_loss actor_loss alpha entropy "
        "updates\n";
}

void write_curve_record(std::ostream& os, int seed, const CurveRecord& r) {
  os << seed << ' ' << r.episode << ' ' << std::setprecision(9) << r.ret << ' ' << r.steps << ' ' << int(r.fell)
     << ' ' << r.speed << ' ' << int(r.actor_frozen) << ' ' << r.critic_lr << ' ' << r.critic_loss << ' '
     << r.actor_loss << ' ' << r.alpha << ' ' << r.entropy << ' ' << r.updates << '\n';
}

template <class T>
std::vector<CurveRecord> sac_train(const EnvFactory& make_env, SacAgent<T>& agent, ReplayBuffer<T>& buffer,
                                   const SacLoopConfig& cfg, const EpisodeCallback& on_episode) {
  validate(cfg);
  if (buffer.obs_dim() != agent.obs_dim() || buffer.action_dim() != agent.action_dim())
    throw ModelError("sac_train: buffer and agent dimensions differ");
  std::mt19937_64 rng(derive_seed(cfg.seed, 3, cfg.first_episode));
  std::vector<CurveRecord> curve;
  RolloutOptions opt;
  opt.deterministic = false;
  for (int start = 0; start < cfg.episodes; start += cfg.episodes_per_round) {
    const int end = std::min(cfg.episodes, start + cfg.episodes_per_round);
    const bool frozen = end <= cfg.warmup_episodes;
    const double lr = critic_lr_at(cfg, start);
    agent.set_critic_lr(lr);
    std::vector<EpisodeSpec> specs;
    for (int e = start; e < end; ++e) {
      const auto g = static_cast<std::uint64_t>(cfg.first_episode + e);
      specs.push_back({derive_seed(cfg.seed, 1, g), derive_seed(cfg.seed, 2, g)});
    }
    const auto eps = cfg.workers > 1 ? run_episodes(make_env, agent.actor(), specs, opt, cfg.workers)
                                     : run_episodes_serial(make_env, agent.actor(), specs, opt);
    int steps = 0;
    for (const auto& ep : eps) {
      for (const auto& t : ep.transitions) buffer.add(t.obs, t.action, t.reward, t.next_obs, t.terminal);
      steps += ep.steps;
    }
    SacStats mean;
    const int n_updates = static_cast<int>(std::lround(steps * cfg.updates_per_step));
    int done = 0;
    if (buffer.size() >= std::max<std::size_t>(cfg.min_buffer, cfg.batch)) {
      for (int u = 0; u < n_updates; ++u) {
        const SacStats s = agent.update(buffer.sample(cfg.batch, rng), frozen, rng);
        mean.critic_loss += s.critic_loss;
        mean.actor_loss += s.actor_loss;
        mean.entropy += s.entropy;
        ++done;
      }
    }
    if (done > 0) {
      mean.critic_loss /= done;
      mean.actor_loss /= done;
      mean.entropy /= done;
    }
    for (int k = 0; k < end - start; ++k) {
      const auto& ep = eps[k];
      CurveRecord r;
      r.episode = cfg.first_episode + start + k;
      r.ret = ep.ret;
      r.steps = ep.steps;
      r.fell = ep.fell;
      r.speed = ep.speed();
      r.actor_frozen = frozen;
      r.critic_lr = lr;
      r.critic_loss = mean.critic_loss;
      r.actor_loss = mean.actor_loss;
      r.alpha = agent.alpha();
      r.entropy = mean.entropy;
      r.updates = agent.updates();
      curve.push_back(r);
      if (on_episode) on_episode(r);
    }
  }
  return curve;
}

// ---- evaluation and ablation

template <class T>
EvalMetrics evaluate_policy(const EnvConfig& cfg, const nn::Mlp<T>& actor, int episodes, std::uint64_t seed,
                            int workers, bool keep_log, std::shared_ptr<const ForceEstimator> estimator) {
  RolloutOptions opt;
  opt.deterministic = true;
  opt.keep_transitions = false;
  opt.keep_log = keep_log;
  return summarize(
      run_parallel(locomotion_factory(cfg, estimator), actor_fn(actor, true), eval_specs(episodes, seed), opt, workers));
}

EvalMetrics evaluate_reference_gait(const EnvConfig& cfg, int episodes, std::uint64_t seed, int workers) {
  RolloutOptions opt;
  opt.keep_transitions = false;
  return summarize(run_parallel(locomotion_factory(cfg), reference_fn(), eval_specs(episodes, seed), opt, workers));
}

AblationChannel parse_channel(const std::string& name) {
  if (name == "none") return AblationChannel::None;
  if (name == "imu+grf") return AblationChannel::ImuGrfNoise;
  if (name == "suction") return AblationChannel::SuctionOff;
  throw ConfigError("unknown ablation channel '" + name + "' (expected none, imu+grf or suction)");
}

std::string channel_name(AblationChannel c) {
  switch (c) {
    case AblationChannel::None: return "none";
    case AblationChannel::ImuGrfNoise: return "imu+grf";
    case AblationChannel::SuctionOff: return "suction";
  }
  return "none";
}

double sign_test_p(int k, int n) {
  if (n <= 0) return 1.0;
  double p = 0.0;
  for (int i = std::max(0, k); i <= n; ++i)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

template <class T>
AblationResult ablate(const EnvConfig& cfg, const nn::Mlp<T>& actor, AblationChannel channel, int episodes,
                      std::uint64_t seed, int workers) {
  AblationResult r;
  r.intact = evaluate_policy(cfg, actor, episodes, seed, workers);
  EnvConfig ab = cfg;
  if (channel == AblationChannel::ImuGrfNoise) ab.imu_grf_noise = true;
  if (channel == AblationChannel::SuctionOff) ab.suction_disabled = true;
  r.ablated = evaluate_policy(ab, actor, episodes, seed, workers);
  for (int i = 0; i < episodes; ++i) {
    if (r.ablated.speeds[i] < r.intact.speeds[i]) ++r.lower;
    if (r.ablated.speeds[i] == r.intact.speeds[i]) ++r.ties;
  }
  r.sign_test_p = sign_test_p(r.lower, episodes - r.ties);
  return r;
}

void write_episode_log(std::ostream& os, const EpisodeResult& ep) {
  os << "# t_s x_bar_m z_m roll_rad pitch_rad yaw_rad reward r_progress r_yaw r_height r_orientation r_smooth";
  for (int i = 0; i < kActionDim; ++i) os << " a" << i;
  for (int l = 0; l < kNumLegs; ++l) os << " grf_true" << l;
  for (int l = 0; l < kNumLegs; ++l) os << " grf_est" << l;
  os << '\n' << std::setprecision(9);
  for (std::size_t k = 0; k < ep.infos.size(); ++k) {
    const StepInfo& s = ep.infos[k];
    os << s.time << ' ' << s.pose.x_bar << ' ' << s.pose.z << ' ' << s.pose.roll << ' ' << s.pose.pitch << ' '
       << s.pose.yaw << ' ' << s.reward.total << ' ' << s.reward.progress << ' ' << s.reward.yaw << ' '
       << s.reward.height << ' ' << s.reward.orientation << ' ' << s.reward.smooth;
    for (double a : ep.actions[k]) os << ' ' << a;
    for (double f : s.grf_true) os << ' ' << f;
    for (double f : s.grf_estimate) os << ' ' << f;
    os << '\n';
  }
}

#define SOFTQUAD_LEARN_INSTANTIATE(T)                                                                          \
  template EpisodeResult run_episode<T>(Environment&, const nn::Mlp<T>&, const EpisodeSpec&,                 \
                                        const RolloutOptions&);                                               \
  template std::vector<EpisodeResult> run_episodes<T>(const EnvFactory&, const nn::Mlp<T>&,                  \
                                                      const std::vector<EpisodeSpec>&, const RolloutOptions&, \
                                                      int);                                                   \
  template std::vector<EpisodeResult> run_episodes_serial<T>(const EnvFactory&, const nn::Mlp<T>&,           \
                                                             const std::vector<EpisodeSpec>&,                \
                                                             const RolloutOptions&);                         \
  template BcReport behavior_clone<T>(const Demonstrations&, nn::Mlp<T>&, const BcConfig&, std::uint64_t);   \
  template std::vector<CurveRecord> sac_train<T>(const EnvFactory&, SacAgent<T>&, ReplayBuffer<T>&,          \
                                                 const SacLoopConfig&, const EpisodeCallback&);              \
  template EvalMetrics evaluate_policy<T>(const EnvConfig&, const nn::Mlp<T>&, int, std::uint64_t, int, bool, \
                                          std::shared_ptr<const ForceEstimator>);                            \
  template AblationResult ablate<T>(const EnvConfig&, const nn::Mlp<T>&, AblationChannel, int, std::uint64_t, \
                                    int);

SOFTQUAD_LEARN_INSTANTIATE(float)
SOFTQUAD_LEARN_INSTANTIATE(double)

}  // namespace softquad::learn
