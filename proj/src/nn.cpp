#include "softquad/nn.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "softquad/error.hpp"
#include "softquad/kernels.hpp"

namespace softquad::nn {

template <class T>
void Gradients<T>::set_zero() {
  for (auto& w : dW) w.setZero();
  for (auto& b : db) b.setZero();
}

template <class T>
Gradients<T>& Gradients<T>::operator+=(const Gradients& o) {
  for (std::size_t i = 0; i < dW.size(); ++i) {
    dW[i] += o.dW[i];
    db[i] += o.db[i];
  }
  return *this;
}

template <class T>
T Gradients<T>::max_abs() const {
  T m = 0;
  for (const auto& w : dW) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const auto& b : db) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

template <class T>
bool Gradients<T>::all_finite() const {
  for (const auto& w : dW)
    if (!w.allFinite()) return false;
  for (const auto& b : db)
    if (!b.allFinite()) return false;
  return true;
}

template <class T>
Mlp<T>::Mlp(const std::vector<int>& widths, Activation hidden, Activation output) {
  if (widths.size() < 2) throw ModelError("network needs at least an input and an output width");
  for (int w : widths)
    if (w <= 0) throw ModelError("layer widths must be positive");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    Layer<T> l;
    l.W = Matrix<T>::Zero(widths[i + 1], widths[i]);
    l.b = Vector<T>::Zero(widths[i + 1]);
    l.act = (i + 2 == widths.size()) ? output : hidden;
    layers_.push_back(std::move(l));
  }
}

template <class T>
void Mlp<T>::init(std::mt19937_64& rng, T last_layer_scale) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer<T>& l = layers_[i];
    T bound = T(1) / std::sqrt(T(l.W.cols()));
    if (i + 1 == layers_.size()) bound *= last_layer_scale;
    std::uniform_real_distribution<double> u(-double(bound), double(bound));
    for (Eigen::Index k = 0; k < l.W.size(); ++k) l.W.data()[k] = T(u(rng));
    l.b.setZero();
  }
}

template <class T>
std::vector<int> Mlp<T>::widths() const {
  std::vector<int> w{input_width()};
  for (const auto& l : layers_) w.push_back(static_cast<int>(l.W.rows()));
  return w;
}

template <class T>
std::size_t Mlp<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.W.size() + l.b.size();
  return n;
}

template <class T>
Matrix<T> Mlp<T>::forward(const Matrix<T>& x) const {
  Matrix<T> a = x, y;
  for (const auto& l : layers_) {
    kernels::dense_forward(l.W, l.b, a, l.act, y);
    a.swap(y);
  }
  return a;
}

template <class T>
Matrix<T> Mlp<T>::forward(const Matrix<T>& x, Tape<T>& tape) const {
  tape.owner = this;
  tape.inputs.resize(layers_.size());
  tape.outputs.resize(layers_.size());
  const Matrix<T>* in = &x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    tape.inputs[i] = *in;
    kernels::dense_forward(layers_[i].W, layers_[i].b, *in, layers_[i].act, tape.outputs[i]);
    in = &tape.outputs[i];
  }
  return tape.outputs.back();
}

template <class T>
Matrix<T> Mlp<T>::backward(const Tape<T>& tape, const Matrix<T>& d_out, Gradients<T>& grads) const {
  if (tape.owner != this || tape.outputs.size() != layers_.size())
    throw ModelError("backward: no forward pass of this network was recorded");
  if (d_out.rows() != output_width() || d_out.cols() != tape.outputs.back().cols())
    throw ModelError("backward: output gradient has the wrong shape");
  if (grads.dW.size() != layers_.size()) grads = zero_gradients();
  Matrix<T> delta = d_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer<T>& l = layers_[k];
    const Matrix<T>& y = tape.outputs[k];
    switch (l.act) {
      case Activation::Tanh: delta.array() *= (T(1) - y.array().square()); break;
      case Activation::Relu: delta.array() *= (y.array() > T(0)).template cast<T>(); break;
      case Activation::Linear: break;
    }
    grads.dW[k].noalias() += delta * tape.inputs[k].transpose();
    grads.db[k] += delta.rowwise().sum();
    Matrix<T> prev = l.W.transpose() * delta;
    delta.swap(prev);
  }
  return delta;
}

template <class T>
Gradients<T> Mlp<T>::zero_gradients() const {
  Gradients<T> g;
  for (const auto& l : layers_) {
    g.dW.push_back(Matrix<T>::Zero(l.W.rows(), l.W.cols()));
    g.db.push_back(Vector<T>::Zero(l.b.size()));
  }
  return g;
}

template <class T>
std::vector<T> Mlp<T>::flat_parameters() const {
  std::vector<T> p;
  p.reserve(parameter_count());
  for (const auto& l : layers_) {
    p.insert(p.end(), l.W.data(), l.W.data() + l.W.size());
    p.insert(p.end(), l.b.data(), l.b.data() + l.b.size());
  }
  return p;
}

template <class T>
void Mlp<T>::set_flat_parameters(const std::vector<T>& p) {
  if (p.size() != parameter_count()) throw ModelError("set_flat_parameters: wrong parameter count");
  std::size_t o = 0;
  for (auto& l : layers_) {
    std::copy(p.begin() + o, p.begin() + o + l.W.size(), l.W.data());
    o += l.W.size();
    std::copy(p.begin() + o, p.begin() + o + l.b.size(), l.b.data());
    o += l.b.size();
  }
}

template <class T>
void Mlp<T>::soft_update(const Mlp& other, T tau) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].W = (T(1) - tau) * layers_[i].W + tau * other.layers_[i].W;
    layers_[i].b = (T(1) - tau) * layers_[i].b + tau * other.layers_[i].b;
  }
}

template <class T>
template <class U>
Mlp<U> Mlp<T>::cast() const {
  Mlp<U> out;
  for (const auto& l : layers_) out.layers().push_back({l.W.template cast<U>(), l.b.template cast<U>(), l.act});
  return out;
}

template <class T>
bool Mlp<T>::operator==(const Mlp& o) const {
  if (layers_.size() != o.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = o.layers_[i];
    if (a.act != b.act || a.W.rows() != b.W.rows() || a.W.cols() != b.W.cols()) return false;
    if (std::memcmp(a.W.data(), b.W.data(), sizeof(T) * a.W.size()) != 0) return false;
    if (std::memcmp(a.b.data(), b.b.data(), sizeof(T) * a.b.size()) != 0) return false;
  }
  return true;
}

template <class T>
AdamState<T> AdamState<T>::for_network(const Mlp<T>& net, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  s.m = net.zero_gradients();
  s.v = net.zero_gradients();
  return s;
}

template <class T>
bool AdamState<T>::operator==(const AdamState& o) const {
  if (step != o.step || cfg.lr != o.cfg.lr || m.dW.size() != o.m.dW.size()) return false;
  for (std::size_t i = 0; i < m.dW.size(); ++i)
    if (m.dW[i] != o.m.dW[i] || m.db[i] != o.m.db[i] || v.dW[i] != o.v.dW[i] || v.db[i] != o.v.db[i]) return false;
  return true;
}

template <class T>
void adam_step(AdamState<T>& opt, Mlp<T>& net, const Gradients<T>& grads) {
  if (!grads.all_finite()) throw TrainingError("optimizer: non-finite gradient");
  ++opt.step;
  const double b1 = opt.cfg.beta1, b2 = opt.cfg.beta2;
  const T c1 = T(1.0 / (1.0 - std::pow(b1, double(opt.step))));
  const T c2 = T(1.0 / (1.0 - std::pow(b2, double(opt.step))));
  const T lr = T(opt.cfg.lr), eps = T(opt.cfg.eps);
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = T(b1) * m + T(1 - b1) * g;
    v.array() = T(b2) * v.array() + T(1 - b2) * g.array().square();
    p.array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
  };
  auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].W, opt.m.dW[i], opt.v.dW[i], grads.dW[i]);
    update(layers[i].b, opt.m.db[i], opt.v.db[i], grads.db[i]);
  }
}

void ScalarAdam::update(double& param, double grad) {
  if (!std::isfinite(grad)) throw TrainingError("optimizer: non-finite gradient");
  ++step;
  m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad;
  const double mh = m / (1 - std::pow(cfg.beta1, double(step)));
  const double vh = v / (1 - std::pow(cfg.beta2, double(step)));
  param -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
}

template <class T>
T log1m_tanh2(T u) {
  // 1 - tanh(u)^2 = 4 / (e^u + e^-u)^2
  const T a = std::abs(u);
  return T(2) * (T(std::numbers::ln2) - a - std::log1p(std::exp(T(-2) * a)));
}

template <class T>
SquashedSample<T> squashed_sample(const Matrix<T>& head, const Matrix<T>& noise) {
  const Eigen::Index A = head.rows() / 2, B = head.cols();
  if (head.rows() != 2 * A || noise.rows() != A || noise.cols() != B)
    throw ModelError("squashed_sample: head must hold means and log-stds for every action");
  SquashedSample<T> s;
  s.mean = head.topRows(A);
  const Matrix<T> raw = head.bottomRows(A);
  s.log_std = raw.cwiseMax(T(kLogStdMin)).cwiseMin(T(kLogStdMax));
  s.clamped = (raw.array() < T(kLogStdMin)) || (raw.array() > T(kLogStdMax));
  s.std = s.log_std.array().exp();
  s.noise = noise;
  const Matrix<T> u = s.mean.array() + s.std.array() * noise.array();
  s.action = u.array().tanh();
  const T half_log_2pi = T(0.5 * std::log(2.0 * std::numbers::pi));
  s.log_prob = Vector<T>::Zero(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    T lp = 0;
    for (Eigen::Index i = 0; i < A; ++i)
      lp += -T(0.5) * noise(i, b) * noise(i, b) - s.log_std(i, b) - half_log_2pi - log1m_tanh2(u(i, b));
    s.log_prob[b] = lp;
  }
  return s;
}

template <class T>
Matrix<T> squashed_backward(const SquashedSample<T>& s, const Vector<T>& w_log_prob, const Matrix<T>& d_action) {
  const Eigen::Index A = s.mean.rows(), B = s.mean.cols();
  Matrix<T> g(2 * A, B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index i = 0; i < A; ++i) {
      const T a = s.action(i, b);
      const T du = w_log_prob[b] * T(2) * a + d_action(i, b) * (T(1) - a * a);
      g(i, b) = du;
      g(A + i, b) = s.clamped(i, b) ? T(0) : du * s.std(i, b) * s.noise(i, b) - w_log_prob[b];
    }
  return g;
}

template struct Gradients<float>;
template struct Gradients<double>;
template class Mlp<float>;
template class Mlp<double>;
template Mlp<double> Mlp<float>::cast<double>() const;
template Mlp<float> Mlp<double>::cast<float>() const;
template Mlp<float> Mlp<float>::cast<float>() const;
template Mlp<double> Mlp<double>::cast<double>() const;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(AdamState<float>&, Mlp<float>&, const Gradients<float>&);
template void adam_step<double>(AdamState<double>&, Mlp<double>&, const Gradients<double>&);
template float log1m_tanh2<float>(float);
template double log1m_tanh2<double>(double);
template SquashedSample<float> squashed_sample<float>(const Matrix<float>&, const Matrix<float>&);
template SquashedSample<double> squashed_sample<double>(const Matrix<double>&, const Matrix<double>&);
template Matrix<float> squashed_backward<float>(const SquashedSample<float>&, const Vector<float>&,
                                                const Matrix<float>&);
template Matrix<double> squashed_backward<double>(const SquashedSample<double>&, const Vector<double>&,
                                                  const Matrix<double>&);

}  // namespace softquad::nn
