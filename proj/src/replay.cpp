#include "softquad/replay.hpp"

#include <algorithm>
#include <cmath>

#include "softquad/error.hpp"

namespace softquad::learn {

template <class T>
ReplayBuffer<T>::ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
  if (capacity == 0 || obs_dim < 1 || action_dim < 1) throw ModelError("replay buffer needs positive sizes");
  obs_.resize(capacity * obs_dim);
  next_obs_.resize(capacity * obs_dim);
  action_.resize(capacity * action_dim);
  reward_.resize(capacity);
  done_.resize(capacity);
}

template <class T>
void ReplayBuffer<T>::add(std::span<const double> obs, std::span<const double> action, double reward,
                          std::span<const double> next_obs, bool terminal) {
  if (static_cast<int>(obs.size()) != obs_dim_ || static_cast<int>(next_obs.size()) != obs_dim_ ||
      static_cast<int>(action.size()) != action_dim_)
    throw ModelError("replay buffer: transition has the wrong shape");
  if (!std::isfinite(reward)) throw ModelError("replay buffer: non-finite reward");
  const std::size_t i = cursor_;
  std::transform(obs.begin(), obs.end(), obs_.begin() + i * obs_dim_, [](double v) { return T(v); });
  std::transform(next_obs.begin(), next_obs.end(), next_obs_.begin() + i * obs_dim_, [](double v) { return T(v); });
  std::transform(action.begin(), action.end(), action_.begin() + i * action_dim_, [](double v) { return T(v); });
  reward_[i] = T(reward);
  done_[i] = terminal ? T(1) : T(0);
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

template <class T>
std::vector<std::size_t> ReplayBuffer<T>::sample_indices(int n, std::mt19937_64& rng) const {
  if (size_ == 0) throw ModelError("replay buffer: sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> u(0, size_ - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = u(rng);
  return idx;
}

template <class T>
Batch<T> ReplayBuffer<T>::gather(const std::vector<std::size_t>& idx) const {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Batch<T> b;
  b.obs.resize(obs_dim_, n);
  b.next_obs.resize(obs_dim_, n);
  b.action.resize(action_dim_, n);
  b.reward.resize(n);
  b.done.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t i = idx[k];
    if (i >= size_) throw ModelError("replay buffer: index outside the filled region");
    std::copy_n(obs_.begin() + i * obs_dim_, obs_dim_, b.obs.col(k).data());
    std::copy_n(next_obs_.begin() + i * obs_dim_, obs_dim_, b.next_obs.col(k).data());
    std::copy_n(action_.begin() + i * action_dim_, action_dim_, b.action.col(k).data());
    b.reward[k] = reward_[i];
    b.done[k] = done_[i];
  }
  return b;
}

template class ReplayBuffer<float>;
template class ReplayBuffer<double>;

}  // namespace softquad::learn
