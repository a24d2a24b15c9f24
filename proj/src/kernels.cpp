#include "softquad/kernels.hpp"

#include <cmath>

#include <omp.h>

#include "softquad/error.hpp"

namespace softquad::kernels {

namespace {

template <class T>
T activate(T z, nn::Activation act) {
  switch (act) {
    case nn::Activation::Tanh: return std::tanh(z);
    case nn::Activation::Relu: return z > T(0) ? z : T(0);
    case nn::Activation::Linear: break;
  }
  return z;
}

template <class T>
void check_shapes(const nn::Matrix<T>& W, const nn::Vector<T>& b, const nn::Matrix<T>& X) {
  if (W.cols() != X.rows() || W.rows() != b.size())
    throw ModelError("dense layer: input width " + std::to_string(X.rows()) + " does not match layer " +
                     std::to_string(W.rows()) + "x" + std::to_string(W.cols()));
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

template <class T>
void dense_forward(const nn::Matrix<T>& W, const nn::Vector<T>& b, const nn::Matrix<T>& X, nn::Activation act,
                   nn::Matrix<T>& Y) {
  check_shapes(W, b, X);
  const Eigen::Index n = X.cols();
  Y.resize(W.rows(), n);
  const Eigen::Index blocks = (n + kColumnBlock - 1) / kColumnBlock;
#pragma omp parallel for schedule(static) if (blocks > 1)
  for (Eigen::Index k = 0; k < blocks; ++k) {
    const Eigen::Index c0 = k * kColumnBlock;
    const Eigen::Index w = std::min<Eigen::Index>(kColumnBlock, n - c0);
    auto out = Y.middleCols(c0, w);
    out.noalias() = W * X.middleCols(c0, w);
    out.colwise() += b;
    if (act != nn::Activation::Linear) out = out.unaryExpr([act](T z) { return activate(z, act); });
  }
}

template <class T>
void dense_forward_serial(const nn::Matrix<T>& W, const nn::Vector<T>& b, const nn::Matrix<T>& X,
                          nn::Activation act, nn::Matrix<T>& Y) {
  check_shapes(W, b, X);
  Y.resize(W.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      T z = b[r];
      for (Eigen::Index i = 0; i < W.cols(); ++i) z += W(r, i) * X(i, c);
      Y(r, c) = activate(z, act);
    }
}

template void dense_forward<float>(const nn::Matrix<float>&, const nn::Vector<float>&, const nn::Matrix<float>&,
                                   nn::Activation, nn::Matrix<float>&);
template void dense_forward<double>(const nn::Matrix<double>&, const nn::Vector<double>&,
                                    const nn::Matrix<double>&, nn::Activation, nn::Matrix<double>&);
template void dense_forward_serial<float>(const nn::Matrix<float>&, const nn::Vector<float>&,
                                          const nn::Matrix<float>&, nn::Activation, nn::Matrix<float>&);
template void dense_forward_serial<double>(const nn::Matrix<double>&, const nn::Vector<double>&,
                                           const nn::Matrix<double>&, nn::Activation, nn::Matrix<double>&);

}  // namespace softquad::kernels
