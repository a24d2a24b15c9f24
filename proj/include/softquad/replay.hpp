#pragma once

// Ring-buffer replay memory with uniform minibatch sampling.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "softquad/nn.hpp"

namespace softquad::learn {

/// Samples are columns.
template <class T>
struct Batch {
  nn::Matrix<T> obs;
  nn::Matrix<T> action;
  nn::Vector<T> reward;
  nn::Matrix<T> next_obs;
  nn::Vector<T> done;  // 1 for terminal transitions only; timeouts bootstrap
  int size() const { return static_cast<int>(reward.size()); }
};

template <class T>
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim);

  void add(std::span<const double> obs, std::span<const double> action, double reward,
           std::span<const double> next_obs, bool terminal);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  /// Slot the next insertion overwrites.
  std::size_t cursor() const { return cursor_; }
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }

  /// Uniform indices over the filled region.
  std::vector<std::size_t> sample_indices(int n, std::mt19937_64& rng) const;
  Batch<T> gather(const std::vector<std::size_t>& idx) const;
  Batch<T> sample(int n, std::mt19937_64& rng) const { return gather(sample_indices(n, rng)); }

  /// Reward stored in a slot, for tests.
  double reward_at(std::size_t slot) const { return reward_[slot]; }
  bool terminal_at(std::size_t slot) const { return done_[slot] != T(0); }

 private:
  std::size_t capacity_;
  int obs_dim_;
  int action_dim_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<T> obs_, action_, next_obs_, reward_, done_;
};

}  // namespace softquad::learn
