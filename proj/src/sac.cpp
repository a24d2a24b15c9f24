#include "softquad/sac.hpp"

#include <algorithm>

#include "softquad/error.hpp"

namespace softquad::learn {

using nn::Matrix;
using nn::Vector;

void validate(const SacConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  for (double lr : {cfg.actor_lr, cfg.critic_lr, cfg.alpha_lr})
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(cfg.initial_alpha >= 0.0)) throw ConfigError("initial alpha must be non-negative");
  if (cfg.auto_alpha && !(cfg.initial_alpha > 0.0)) throw ConfigError("automatic temperature needs alpha > 0");
  if (!(cfg.divergence_threshold > 0.0) || cfg.divergence_window < 1)
    throw ConfigError("divergence threshold and window must be positive");
  for (int h : cfg.actor_hidden)
    if (h < 1) throw ConfigError("hidden widths must be positive");
  for (int h : cfg.critic_hidden)
    if (h < 1) throw ConfigError("hidden widths must be positive");
}

template <class T>
std::vector<double> policy_action(const nn::Mlp<T>& actor, std::span<const double> obs, bool deterministic,
                                  std::mt19937_64& rng) {
  if (static_cast<int>(obs.size()) != actor.input_width()) throw ModelError("policy_action: observation width");
  Matrix<T> x(actor.input_width(), 1);
  for (std::size_t i = 0; i < obs.size(); ++i) x(i, 0) = T(obs[i]);
  const Matrix<T> head = actor.forward(x);
  const int A = actor.output_width() / 2;
  std::vector<double> a(A);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < A; ++i) {
    double u = static_cast<double>(head(i, 0));
    if (!deterministic) {
      const double ls = std::clamp(static_cast<double>(head(A + i, 0)), nn::kLogStdMin, nn::kLogStdMax);
      u += std::exp(ls) * g(rng);
    }
    a[i] = std::tanh(u);
  }
  return a;
}

template <class T>
nn::Mlp<T> make_actor(int obs_dim, int action_dim, const std::vector<int>& hidden, nn::Activation act,
                      std::mt19937_64& rng) {
  std::vector<int> widths{obs_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(2 * action_dim);
  nn::Mlp<T> net(widths, act, nn::Activation::Linear);
  net.init(rng, T(0.1));
  return net;
}

template <class T>
void set_log_std(nn::Mlp<T>& actor, double log_std) {
  auto& last = actor.layers().back();
  const Eigen::Index A = last.W.rows() / 2;
  last.W.bottomRows(A).setZero();
  last.b.tail(A).setConstant(T(log_std));
}

namespace {

template <class T>
nn::Mlp<T> make_critic(int in, const SacConfig& cfg, std::mt19937_64& rng) {
  std::vector<int> widths{in};
  widths.insert(widths.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  widths.push_back(1);
  nn::Mlp<T> net(widths, cfg.hidden_activation, nn::Activation::Linear);
  net.init(rng);
  return net;
}

template <class T>
Matrix<T> standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix<T> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = T(g(rng));
  return m;
}

}  // namespace

template <class T>
SacAgent<T>::SacAgent(int obs_dim, int action_dim, const SacConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), obs_dim_(obs_dim), action_dim_(action_dim) {
  validate(cfg_);
  if (obs_dim < 1 || action_dim < 1) throw ModelError("SAC agent needs positive dimensions");
  target_entropy_ = std::isnan(cfg.target_entropy) ? -double(action_dim) : cfg.target_entropy;
  std::mt19937_64 rng(seed);
  actor_ = make_actor<T>(obs_dim, action_dim, cfg.actor_hidden, cfg.hidden_activation, rng);
  q1_ = make_critic<T>(obs_dim + action_dim, cfg, rng);
  q2_ = make_critic<T>(obs_dim + action_dim, cfg, rng);
  q1_targ_ = q1_;
  q2_targ_ = q2_;
  actor_opt_ = nn::AdamState<T>::for_network(actor_, {cfg.actor_lr});
  q1_opt_ = nn::AdamState<T>::for_network(q1_, {cfg.critic_lr});
  q2_opt_ = nn::AdamState<T>::for_network(q2_, {cfg.critic_lr});
  alpha_opt_.cfg.lr = cfg.alpha_lr;
  log_alpha_ = cfg.initial_alpha > 0.0 ? std::log(cfg.initial_alpha) : -std::numeric_limits<double>::infinity();
}

template <class T>
void SacAgent<T>::set_actor(const nn::Mlp<T>& actor) {
  if (actor.widths() != actor_.widths()) throw ModelError("set_actor: architecture mismatch");
  actor_ = actor;
  actor_opt_ = nn::AdamState<T>::for_network(actor_, actor_opt_.cfg);
}

template <class T>
void SacAgent<T>::set_critic_lr(double lr) {
  if (!(lr > 0.0)) throw ConfigError("critic learning rate must be positive");
  q1_opt_.cfg.lr = lr;
  q2_opt_.cfg.lr = lr;
}

template <class T>
Matrix<T> SacAgent<T>::critic_input(const Matrix<T>& obs, const Matrix<T>& action) const {
  Matrix<T> x(obs_dim_ + action_dim_, obs.cols());
  x.topRows(obs_dim_) = obs;
  x.bottomRows(action_dim_) = action;
  return x;
}

template <class T>
Matrix<T> SacAgent<T>::q_values(const Matrix<T>& obs, const Matrix<T>& action) const {
  const Matrix<T> x = critic_input(obs, action);
  Matrix<T> q(2, obs.cols());
  q.row(0) = q1_.forward(x);
  q.row(1) = q2_.forward(x);
  return q;
}

template <class T>
Vector<T> SacAgent<T>::critic_targets(const Batch<T>& b, const Matrix<T>& next_noise) const {
  const auto s = nn::squashed_sample(actor_.forward(b.next_obs), next_noise);
  const Matrix<T> x = critic_input(b.next_obs, s.action);
  const Matrix<T> q1 = q1_targ_.forward(x);
  const Matrix<T> q2 = q2_targ_.forward(x);
  const T alpha = T(this->alpha());
  const T gamma = T(cfg_.gamma);
  Vector<T> y(b.size());
  for (int k = 0; k < b.size(); ++k) {
    T soft = std::min(q1(0, k), q2(0, k));
    if (alpha != T(0)) soft -= alpha * s.log_prob[k];
    y[k] = b.reward[k] + gamma * (T(1) - b.done[k]) * soft;
  }
  return y;
}

template <class T>
SacStats SacAgent<T>::update(const Batch<T>& b, bool actor_frozen, std::mt19937_64& rng) {
  const int B = b.size();
  if (B < 1 || b.obs.rows() != obs_dim_ || b.action.rows() != action_dim_)
    throw ModelError("SAC update: batch has the wrong shape");
  SacStats st;
  const T inv_b = T(1) / T(B);

  // Critics.
  const Vector<T> y = critic_targets(b, standard_normal<T>(action_dim_, B, rng));
  const Matrix<T> x = critic_input(b.obs, b.action);
  double loss = 0.0, q_sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    nn::Mlp<T>& net = c == 0 ? q1_ : q2_;
    nn::Tape<T> tape;
    const Matrix<T> q = net.forward(x, tape);
    Matrix<T> d(1, B);
    for (int k = 0; k < B; ++k) {
      const T e = q(0, k) - y[k];
      d(0, k) = e * inv_b;
      loss += 0.5 * double(e) * double(e) / B;
      q_sum += double(q(0, k)) / (2.0 * B);
    }
    auto g = net.zero_gradients();
    net.backward(tape, d, g);
    if (!g.all_finite()) throw TrainingError("SAC: non-finite critic gradient");
    nn::adam_step(c == 0 ? q1_opt_ : q2_opt_, net, g);
  }
  st.critic_loss = loss;
  st.q_mean = q_sum;
  if (!std::isfinite(loss)) throw TrainingError("SAC: critic loss is not finite");
  diverged_ = loss > cfg_.divergence_threshold ? diverged_ + 1 : 0;
  if (diverged_ >= cfg_.divergence_window)
    throw TrainingError("SAC: critic loss above " + std::to_string(cfg_.divergence_threshold) + " for " +
                        std::to_string(diverged_) + " updates");

  // Actor and temperature.
  const double alpha = this->alpha();
  if (!actor_frozen) {
    nn::Tape<T> ta;
    const Matrix<T> head = actor_.forward(b.obs, ta);
    const auto s = nn::squashed_sample(head, standard_normal<T>(action_dim_, B, rng));
    const Matrix<T> xa = critic_input(b.obs, s.action);
    nn::Tape<T> t1, t2;
    const Matrix<T> qa1 = q1_.forward(xa, t1);
    const Matrix<T> qa2 = q2_.forward(xa, t2);
    Matrix<T> d1 = Matrix<T>::Zero(1, B), d2 = Matrix<T>::Zero(1, B);
    double actor_loss = 0.0, logp_sum = 0.0;
    for (int k = 0; k < B; ++k) {
      const bool first = qa1(0, k) <= qa2(0, k);
      (first ? d1 : d2)(0, k) = -inv_b;
      actor_loss += (alpha * double(s.log_prob[k]) - double(std::min(qa1(0, k), qa2(0, k)))) / B;
      logp_sum += double(s.log_prob[k]) / B;
    }
    auto scratch1 = q1_.zero_gradients();
    auto scratch2 = q2_.zero_gradients();
    const Matrix<T> dx = q1_.backward(t1, d1, scratch1) + q2_.backward(t2, d2, scratch2);
    const Matrix<T> d_action = dx.bottomRows(action_dim_);
    const Vector<T> w = Vector<T>::Constant(B, T(alpha) * inv_b);
    const Matrix<T> d_head = nn::squashed_backward(s, w, d_action);
    auto ga = actor_.zero_gradients();
    actor_.backward(ta, d_head, ga);
    if (!ga.all_finite()) throw TrainingError("SAC: non-finite actor gradient");
    nn::adam_step(actor_opt_, actor_, ga);
    st.actor_loss = actor_loss;
    st.entropy = -logp_sum;
    if (cfg_.auto_alpha) alpha_opt_.update(log_alpha_, -(logp_sum + target_entropy_));
  }
  st.alpha = this->alpha();

  q1_targ_.soft_update(q1_, T(cfg_.tau));
  q2_targ_.soft_update(q2_, T(cfg_.tau));
  ++updates_;
  return st;
}

template <class T>
void SacAgent<T>::save(Checkpoint<T>& ck, const std::string& p) const {
  ck.put_network(p + ".actor", actor_);
  ck.put_network(p + ".q1", q1_);
  ck.put_network(p + ".q2", q2_);
  ck.put_network(p + ".q1_target", q1_targ_);
  ck.put_network(p + ".q2_target", q2_targ_);
  ck.put_adam(p + ".actor_opt", actor_opt_, actor_);
  ck.put_adam(p + ".q1_opt", q1_opt_, q1_);
  ck.put_adam(p + ".q2_opt", q2_opt_, q2_);
  ck.put_scalars(p + ".state", {log_alpha_, double(alpha_opt_.step), alpha_opt_.m, alpha_opt_.v,
                                alpha_opt_.cfg.lr, double(updates_), double(diverged_), target_entropy_});
}

template <class T>
void SacAgent<T>::load(const Checkpoint<T>& ck, const std::string& p) {
  const nn::Mlp<T>& a = ck.network(p + ".actor");
  if (a.widths() != actor_.widths() || ck.network(p + ".q1").widths() != q1_.widths())
    throw CheckpointError("SAC checkpoint does not match the agent architecture");
  actor_ = a;
  q1_ = ck.network(p + ".q1");
  q2_ = ck.network(p + ".q2");
  q1_targ_ = ck.network(p + ".q1_target");
  q2_targ_ = ck.network(p + ".q2_target");
  actor_opt_ = ck.adam(p + ".actor_opt");
  q1_opt_ = ck.adam(p + ".q1_opt");
  q2_opt_ = ck.adam(p + ".q2_opt");
  const auto& s = ck.scalars(p + ".state");
  if (s.size() != 8) throw CheckpointError("SAC checkpoint state has the wrong length");
  log_alpha_ = s[0];
  alpha_opt_.step = static_cast<std::int64_t>(s[1]);
  alpha_opt_.m = s[2];
  alpha_opt_.v = s[3];
  alpha_opt_.cfg.lr = s[4];
  updates_ = static_cast<std::int64_t>(s[5]);
  diverged_ = static_cast<int>(s[6]);
  target_entropy_ = s[7];
}

template class SacAgent<float>;
template class SacAgent<double>;
template std::vector<double> policy_action<float>(const nn::Mlp<float>&, std::span<const double>, bool,
                                                  std::mt19937_64&);
template std::vector<double> policy_action<double>(const nn::Mlp<double>&, std::span<const double>, bool,
                                                   std::mt19937_64&);
template nn::Mlp<float> make_actor<float>(int, int, const std::vector<int>&, nn::Activation, std::mt19937_64&);
template nn::Mlp<double> make_actor<double>(int, int, const std::vector<int>&, nn::Activation, std::mt19937_64&);
template void set_log_std<float>(nn::Mlp<float>&, double);
template void set_log_std<double>(nn::Mlp<double>&, double);

}  // namespace softquad::learn
