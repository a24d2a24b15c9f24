#pragma once

// Dense multilayer networks with a recorded tape for reverse-mode gradients,
// the Adam optimizer, and the squashed-Gaussian policy head.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace softquad::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation : std::uint8_t { Linear = 0, Tanh = 1, Relu = 2 };

template <class T>
struct Layer {
  Matrix<T> W;  // out x in
  Vector<T> b;
  Activation act = Activation::Linear;
};

/// Gradients shaped like the network's parameters.
template <class T>
struct Gradients {
  std::vector<Matrix<T>> dW;
  std::vector<Vector<T>> db;

  void set_zero();
  Gradients& operator+=(const Gradients& o);
  T max_abs() const;
  bool all_finite() const;
};

template <class T>
class Mlp;

/// Activations of one recorded forward pass. Samples are columns.
template <class T>
struct Tape {
  const Mlp<T>* owner = nullptr;
  std::vector<Matrix<T>> inputs;   // input of each layer
  std::vector<Matrix<T>> outputs;  // post-activation output of each layer
};

template <class T>
class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, h1, ..., out}; hidden layers use `hidden`, the last `output`.
  Mlp(const std::vector<int>& widths, Activation hidden, Activation output);

  /// Fan-in scaled uniform initialization, biases zero.
  void init(std::mt19937_64& rng, T last_layer_scale = T(1));

  int input_width() const { return static_cast<int>(layers_.front().W.cols()); }
  int output_width() const { return static_cast<int>(layers_.back().W.rows()); }
  std::vector<int> widths() const;
  std::size_t parameter_count() const;

  Matrix<T> forward(const Matrix<T>& x) const;
  Matrix<T> forward(const Matrix<T>& x, Tape<T>& tape) const;

  /// Backpropagates dL/d(output) through a tape recorded by this network.
  /// Adds parameter gradients to `grads` and returns dL/d(input).
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& d_out, Gradients<T>& grads) const;

  Gradients<T> zero_gradients() const;

  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

  /// Flat parameter view in layer order (W column-major, then b).
  std::vector<T> flat_parameters() const;
  void set_flat_parameters(const std::vector<T>& p);

  /// this = (1 - tau) this + tau other.
  void soft_update(const Mlp& other, T tau);

  template <class U>
  Mlp<U> cast() const;

  bool operator==(const Mlp& o) const;

 private:
  std::vector<Layer<T>> layers_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig cfg;
  std::int64_t step = 0;
  Gradients<T> m;
  Gradients<T> v;

  static AdamState for_network(const Mlp<T>& net, const AdamConfig& cfg);
  bool operator==(const AdamState& o) const;
};

/// One Adam update at the state's learning rate. Throws TrainingError on
/// non-finite gradients.
template <class T>
void adam_step(AdamState<T>& opt, Mlp<T>& net, const Gradients<T>& grads);

/// Scalar Adam for the entropy temperature.
struct ScalarAdam {
  AdamConfig cfg;
  std::int64_t step = 0;
  double m = 0.0, v = 0.0;
  void update(double& param, double grad);
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// Squashed Gaussian policy sample for a batch. `head` holds the actor output
/// with the means in rows [0, A) and raw log-stds in rows [A, 2A).
template <class T>
struct SquashedSample {
  Matrix<T> mean;     // A x B
  Matrix<T> log_std;  // clamped
  Matrix<T> std;
  Matrix<T> noise;    // standard normal, A x B
  Matrix<T> action;   // tanh(mean + std * noise)
  Vector<T> log_prob; // per sample
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped;
};

template <class T>
SquashedSample<T> squashed_sample(const Matrix<T>& head, const Matrix<T>& noise);

/// Gradient of sum_b [w_lp * log_prob_b + dot(g_a_b, action_b)] with respect to
/// the actor head, given per-sample weights for the log-prob term and dL/da.
template <class T>
Matrix<T> squashed_backward(const SquashedSample<T>& s, const Vector<T>& w_log_prob, const Matrix<T>& d_action);

/// log(1 - tanh(u)^2) without cancellation.
template <class T>
T log1m_tanh2(T u);

}  // namespace softquad::nn
