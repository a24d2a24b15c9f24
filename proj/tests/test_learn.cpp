#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "softquad/error.hpp"
#include "softquad/learn.hpp"

using namespace softquad;
using namespace softquad::learn;

namespace {

std::vector<double> v(std::initializer_list<double> x) { return x; }

EnvConfig short_env() {
  EnvConfig cfg;
  cfg.episode_steps = 6;
  return cfg;
}

// Bang-bang policy toward the origin, simulated through the environment.
double bang_bang_return(double x0) {
  ToyReach env;
  env.set_start(x0);
  double ret = 0.0;
  for (int t = 0; t < ToyReach::kHorizon; ++t) {
    const double x = env.position();
    const double a = std::clamp(-x / ToyReach::kGain, -1.0, 1.0);
    ret += env.step(std::vector<double>{a}).reward;
  }
  return ret;
}

SacConfig toy_sac() {
  SacConfig c;
  c.actor_hidden = {64, 64};
  c.critic_hidden = {64, 64};
  c.gamma = 0.9;
  c.actor_lr = 1e-3;
  c.critic_lr = 1e-3;
  c.alpha_lr = 1e-3;
  c.initial_alpha = 0.1;
  return c;
}

}  // namespace

TEST_CASE("replay buffer overwrites the oldest transition after wrapping") {
  ReplayBuffer<double> buf(5, 2, 1);
  for (int i = 0; i < 7; ++i) buf.add(v({double(i), 0}), v({0.1}), double(i), v({0, 0}), i == 6);
  CHECK(buf.size() == 5);
  CHECK(buf.cursor() == 2);
  // Slots 0 and 1 hold transitions 5 and 6, slots 2..4 still hold 2..4.
  CHECK(buf.reward_at(0) == 5.0);
  CHECK(buf.reward_at(1) == 6.0);
  CHECK(buf.reward_at(2) == 2.0);
  CHECK(buf.terminal_at(1));
  CHECK_FALSE(buf.terminal_at(0));
  CHECK_THROWS_AS(buf.add(v({1}), v({0.1}), 0.0, v({0, 0}), false), ModelError);
  CHECK_THROWS_AS((ReplayBuffer<double>(0, 2, 1)), ModelError);
  ReplayBuffer<double> empty(4, 1, 1);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(empty.sample(3, rng), ModelError);
}

TEST_CASE("replay sampling is uniform over the filled region") {
  ReplayBuffer<float> buf(100, 1, 1);
  for (int i = 0; i < 40; ++i) buf.add(v({double(i)}), v({0}), i, v({0}), false);
  std::mt19937_64 rng(9);
  std::vector<int> counts(100, 0);
  const int draws = 1000000;
  for (int k = 0; k < draws / 1000; ++k)
    for (auto i : buf.sample_indices(1000, rng)) ++counts[i];
  const double p = 1.0 / 40, mean = draws * p, sigma = std::sqrt(draws * p * (1 - p));
  for (int i = 0; i < 40; ++i) CHECK(std::abs(counts[i] - mean) < 3.0 * sigma + 1.0);
  for (int i = 40; i < 100; ++i) CHECK(counts[i] == 0);
}

TEST_CASE("replay batches keep the terminal flag and timeouts bootstrap") {
  ReplayBuffer<double> buf(4, 1, 1);
  buf.add(v({1}), v({0.5}), 2.0, v({3}), true);
  buf.add(v({4}), v({-0.5}), 5.0, v({6}), false);
  const Batch<double> b = buf.gather({0, 1});
  CHECK(b.obs(0, 0) == 1.0);
  CHECK(b.next_obs(0, 1) == 6.0);
  CHECK(b.action(0, 1) == -0.5);
  CHECK(b.done[0] == 1.0);
  CHECK(b.done[1] == 0.0);
  CHECK_THROWS_AS(buf.gather({3}), ModelError);
}

TEST_CASE("toy reach optimal return matches the bang-bang rollout") {
  for (double x0 : {-1.0, -0.73, -0.2, 0.0, 0.05, 0.5, 0.99, 1.0})
    CHECK(ToyReach::optimal_return(x0) == doctest::Approx(bang_bang_return(x0)).epsilon(1e-12));
  CHECK(ToyReach::optimal_return(1.0) == doctest::Approx(18.0));
  CHECK(ToyReach::optimal_return(0.0) == 20.0);
}

TEST_CASE("two-state value iteration matches the closed form") {
  const TwoStateMdp mdp(1.0, -0.5);
  const double g = 0.9;
  const auto vi = mdp.value_iteration(g);
  CHECK(vi[0] == doctest::Approx((1.0 + g * -0.5) / (1 - g * g)).epsilon(1e-12));
  CHECK(vi[1] == doctest::Approx((-0.5 + g * 1.0) / (1 - g * g)).epsilon(1e-12));
}

TEST_CASE("with zero temperature and a deterministic actor the critic converges to the TD fixed point") {
  TwoStateMdp mdp(1.0, -0.5);
  SacConfig c;
  c.actor_hidden = {4};
  c.critic_hidden = {};
  c.gamma = 0.9;
  c.tau = 0.05;
  c.critic_lr = 1e-2;
  c.initial_alpha = 0.0;
  c.auto_alpha = false;
  SacAgent<double> agent(2, 1, c, 3);
  nn::Mlp<double> actor = agent.actor();
  set_log_std(actor, -30.0);  // clamped to the minimum: effectively deterministic
  agent.set_actor(actor);

  ReplayBuffer<double> buf(64, 2, 1);
  std::mt19937_64 rng(4);
  std::vector<double> obs = mdp.reset(0);
  for (int k = 0; k < 64; ++k) {
    const auto a = policy_action(agent.actor(), obs, false, rng);
    const EnvStep s = mdp.step(a);
    buf.add(obs, a, s.reward, s.obs, false);
    obs = s.obs;
  }
  // Adam's step size does not shrink with the error, so the rate decays
  // geometrically to reach the tolerance.
  for (int u = 0; u < 30000; ++u) {
    agent.set_critic_lr(1e-2 * std::pow(1e-6, u / 30000.0));
    agent.update(buf.sample(32, rng), true, rng);
  }
  const auto vi = mdp.value_iteration(c.gamma);
  const Batch<double> b = buf.gather({0, 1});
  const nn::Vector<double> y = agent.critic_targets(b, nn::Matrix<double>::Zero(1, 2));
  const nn::Matrix<double> q = agent.q_values(b.obs, b.action);
  for (int k = 0; k < 2; ++k) {
    const int s = b.obs(0, k) == 1.0 ? 0 : 1;
    const double oracle_target = mdp.state_reward(s) + c.gamma * vi[1 - s];
    CHECK(std::abs(y[k] - oracle_target) < 1e-6);
    CHECK(std::abs(q(0, k) - vi[s]) < 1e-6);
    CHECK(std::abs(q(1, k) - vi[s]) < 1e-6);
  }
}

TEST_CASE("critic learning rate follows the warm-up schedule") {
  SacLoopConfig c;
  CHECK(critic_lr_at(c, 0) == doctest::Approx(3e-4));
  CHECK(critic_lr_at(c, 50) == doctest::Approx(2e-4));
  CHECK(critic_lr_at(c, 100) == doctest::Approx(1e-4));
  CHECK(critic_lr_at(c, 300) == doctest::Approx(1e-4));
  for (int e = 1; e <= 100; ++e) CHECK(critic_lr_at(c, e) < critic_lr_at(c, e - 1));
  c.critic_lr_decay_episodes = 0;
  CHECK(critic_lr_at(c, 0) == c.critic_lr_end);
  c.episodes_per_round = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("warm-up keeps the actor bit-identical while the critic learns") {
  SacAgent<float> agent(1, 1, toy_sac(), 2);
  const nn::Mlp<float> before = agent.actor();
  const nn::Mlp<float> critic_before = agent.critic(0);
  ReplayBuffer<float> buf(10000, 1, 1);
  SacLoopConfig lc;
  lc.episodes = 12;
  lc.warmup_episodes = 12;
  lc.critic_lr_decay_episodes = 12;
  lc.episodes_per_round = 2;
  lc.batch = 32;
  lc.min_buffer = 32;
  const auto curve = sac_train<float>([] { return std::make_unique<ToyReach>(); }, agent, buf, lc);
  CHECK(agent.actor() == before);
  CHECK_FALSE(agent.critic(0) == critic_before);
  CHECK(curve.front().critic_lr > curve.back().critic_lr);
  for (const auto& r : curve) CHECK(r.actor_frozen);
  CHECK(agent.updates() > 0);
}

TEST_CASE("SAC learns the toy reach task") {
  SacAgent<float> agent(1, 1, toy_sac(), 11);
  ReplayBuffer<float> buf(50000, 1, 1);
  SacLoopConfig lc;
  lc.episodes = 1000;  // 20k steps
  lc.warmup_episodes = 0;
  lc.critic_lr_start = lc.critic_lr_end = 1e-3;
  lc.critic_lr_decay_episodes = 0;
  lc.episodes_per_round = 1;
  lc.batch = 128;
  lc.min_buffer = 500;
  lc.seed = 11;
  sac_train<float>([] { return std::make_unique<ToyReach>(); }, agent, buf, lc);
  double got = 0.0, best = 0.0;
  std::mt19937_64 rng(0);
  for (int i = 0; i <= 40; ++i) {
    const double x0 = -1.0 + 2.0 * i / 40;
    ToyReach env;
    env.set_start(x0);
    std::vector<double> obs{x0};
    for (int t = 0; t < ToyReach::kHorizon; ++t) {
      const EnvStep s = env.step(policy_action(agent.actor(), obs, true, rng));
      got += s.reward;
      obs = s.obs;
    }
    best += ToyReach::optimal_return(x0);
  }
  MESSAGE("toy reach: " << got / best << " of optimal");
  CHECK(got / best >= 0.9);
}

TEST_CASE("sustained critic divergence aborts training") {
  SacConfig c = toy_sac();
  c.divergence_threshold = 1e-12;
  c.divergence_window = 3;
  SacAgent<double> agent(1, 1, c, 1);
  ReplayBuffer<double> buf(16, 1, 1);
  for (int i = 0; i < 16; ++i) buf.add(v({0.1 * i}), v({0.0}), 100.0, v({0.0}), false);
  std::mt19937_64 rng(1);
  agent.update(buf.sample(8, rng), false, rng);
  agent.update(buf.sample(8, rng), false, rng);
  CHECK_THROWS_AS(agent.update(buf.sample(8, rng), false, rng), TrainingError);
}

TEST_CASE("agent checkpoint round trip continues identically") {
  SacAgent<float> a(3, 2, toy_sac(), 5);
  ReplayBuffer<float> buf(64, 3, 2);
  std::mt19937_64 fill(2);
  std::normal_distribution<double> g;
  for (int i = 0; i < 64; ++i)
    buf.add(v({g(fill), g(fill), g(fill)}), v({0.3, -0.2}), g(fill), v({g(fill), g(fill), g(fill)}), i % 9 == 0);
  std::mt19937_64 rng(3);
  for (int u = 0; u < 5; ++u) a.update(buf.sample(16, rng), false, rng);
  Checkpoint<float> ck;
  a.save(ck, "sac");
  const auto bytes = ck.serialize();
  SacAgent<float> b(3, 2, toy_sac(), 99);
  b.load(Checkpoint<float>::deserialize(bytes), "sac");
  CHECK(b.actor() == a.actor());
  CHECK(b.alpha() == a.alpha());
  std::mt19937_64 ra(8), rb(8);
  const auto batch = buf.sample(16, ra);
  rb = ra;
  a.update(batch, false, ra);
  b.update(batch, false, rb);
  CHECK(a.actor() == b.actor());
  CHECK(a.critic(1) == b.critic(1));
  CHECK(a.target_critic(0) == b.target_critic(0));
  SacAgent<float> wrong(4, 2, toy_sac(), 1);
  CHECK_THROWS_AS(wrong.load(Checkpoint<float>::deserialize(bytes), "sac"), CheckpointError);
}

TEST_CASE("parallel rollouts equal the serial reference bit for bit") {
  std::mt19937_64 rng(1);
  const auto actor = make_actor<float>(kObsDim, kActionDim, {32}, nn::Activation::Relu, rng);
  std::vector<EpisodeSpec> specs;
  for (int i = 0; i < 5; ++i) specs.push_back({derive_seed(1, 1, i), derive_seed(1, 2, i)});
  const EnvFactory make = locomotion_factory(short_env());
  const auto serial = run_episodes_serial(make, actor, specs, RolloutOptions{});
  for (int workers : {2, 3, 8}) {
    const auto par = run_episodes(make, actor, specs, RolloutOptions{}, workers);
    REQUIRE(par.size() == serial.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
      CHECK(par[i].ret == serial[i].ret);
      CHECK(par[i].displacement == serial[i].displacement);
      REQUIRE(par[i].transitions.size() == serial[i].transitions.size());
      for (std::size_t k = 0; k < par[i].transitions.size(); ++k) {
        CHECK(par[i].transitions[k].obs == serial[i].transitions[k].obs);
        CHECK(par[i].transitions[k].action == serial[i].transitions[k].action);
      }
    }
  }
}

TEST_CASE("SAC training is independent of the worker count") {
  auto run = [](int workers) {
    SacConfig c;
    c.actor_hidden = c.critic_hidden = {16};
    SacAgent<float> agent(kObsDim, kActionDim, c, 4);
    ReplayBuffer<float> buf(1000, kObsDim, kActionDim);
    SacLoopConfig lc;
    lc.episodes = 4;
    lc.warmup_episodes = 2;
    lc.critic_lr_decay_episodes = 2;
    lc.episodes_per_round = 2;
    lc.batch = 8;
    lc.min_buffer = 8;
    lc.workers = workers;
    const auto curve = sac_train<float>(locomotion_factory(short_env()), agent, buf, lc);
    return std::make_pair(agent.actor(), curve);
  };
  const auto [a1, c1] = run(1);
  const auto [a3, c3] = run(3);
  CHECK(a1 == a3);
  REQUIRE(c1.size() == c3.size());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].ret == c3[i].ret);
    CHECK(c1[i].critic_loss == c3[i].critic_loss);
  }
}

TEST_CASE("demonstrations are episode-tagged, time-ordered and within the action bounds") {
  const Demonstrations d = collect_demonstrations(short_env(), 3, 7);
  CHECK(d.discarded == 0);
  CHECK(d.size() == 18);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.obs[i].size() == 136);
    CHECK(d.action[i].size() == 16);
    for (double a : d.action[i]) {
      CHECK(a >= -1.0);
      CHECK(a <= 1.0);
    }
    CHECK(d.episode[i] == static_cast<int>(i / 6));
    CHECK(d.step[i] == static_cast<int>(i % 6));
  }
}

TEST_CASE("cloning a constant action drives the mean to that constant") {
  Demonstrations d;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  const std::vector<double> target{0.3, -0.6};
  for (int e = 0; e < 10; ++e)
    for (int k = 0; k < 30; ++k) {
      d.obs.push_back({g(rng), g(rng), g(rng)});
      d.action.push_back(target);
      d.episode.push_back(e);
      d.step.push_back(k);
    }
  auto actor = make_actor<double>(3, 2, {16}, nn::Activation::Tanh, rng);
  BcConfig cfg;
  cfg.epochs = 300;
  cfg.batch = 32;
  cfg.lr = 1e-2;
  cfg.final_lr = 1e-4;
  const BcReport rep = behavior_clone(d, actor, cfg, 2);
  CHECK(rep.validation_mse < 1e-5);
  CHECK(rep.validation_samples == 30);
  std::mt19937_64 r2(0);
  const auto a = policy_action(actor, v({0.1, 0.2, -0.3}), true, r2);
  CHECK(a[0] == doctest::Approx(0.3).epsilon(0.01));
  CHECK(a[1] == doctest::Approx(-0.6).epsilon(0.01));
  // Log-std head reset to a constant.
  const auto head = actor.forward(nn::Matrix<double>::Random(3, 1));
  CHECK(head(2, 0) == -1.0);
  CHECK(head(3, 0) == -1.0);

  Demonstrations empty;
  CHECK_THROWS_AS(behavior_clone(empty, actor, cfg, 1), TrainingError);
}

TEST_CASE("evaluation is deterministic and the identity ablation changes nothing") {
  std::mt19937_64 rng(5);
  const auto actor = make_actor<float>(kObsDim, kActionDim, {16}, nn::Activation::Relu, rng);
  const EnvConfig cfg = short_env();
  const EvalMetrics a = evaluate_policy(cfg, actor, 3, 17);
  const EvalMetrics b = evaluate_policy(cfg, actor, 3, 17, 2);
  CHECK(a.speeds == b.speeds);
  CHECK(a.mean_tilt == b.mean_tilt);
  const AblationResult none = ablate(cfg, actor, AblationChannel::None, 3, 17);
  CHECK(none.intact.speeds == none.ablated.speeds);
  CHECK(none.ties == 3);
  CHECK(none.intact.speeds == a.speeds);
  CHECK(parse_channel("imu+grf") == AblationChannel::ImuGrfNoise);
  CHECK_THROWS_AS(parse_channel("vision"), ConfigError);
}

TEST_CASE("one-sided sign test") {
  CHECK(sign_test_p(5, 5) == doctest::Approx(1.0 / 32));
  CHECK(sign_test_p(9, 10) == doctest::Approx(11.0 / 1024));
  CHECK(sign_test_p(0, 4) == doctest::Approx(1.0));
  CHECK(sign_test_p(0, 0) == 1.0);
}

TEST_CASE("episode log has a header and one row per step") {
  std::mt19937_64 rng(5);
  const auto actor = make_actor<float>(kObsDim, kActionDim, {16}, nn::Activation::Relu, rng);
  const EvalMetrics m = evaluate_policy(short_env(), actor, 1, 3, 1, true);
  std::ostringstream os;
  write_episode_log(os, m.episodes[0]);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line.rfind("# t_s", 0) == 0);
  int rows = 0, cols = 0;
  while (std::getline(is, line)) {
    ++rows;
    std::istringstream ls(line);
    double x;
    cols = 0;
    while (ls >> x) ++cols;
  }
  CHECK(rows == 6);
  CHECK(cols == 12 + 16 + 8);
}
