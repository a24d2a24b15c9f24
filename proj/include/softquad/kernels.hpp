#pragma once

// Batched dense-layer kernels. The OpenMP version splits the batch into column
// blocks; the serial version is a plain loop nest kept as the reference.

#include "softquad/nn.hpp"

namespace softquad::kernels {

/// Y = act(W X + b), samples are columns of X.
template <class T>
void dense_forward(const nn::Matrix<T>& W, const nn::Vector<T>& b, const nn::Matrix<T>& X, nn::Activation act,
                   nn::Matrix<T>& Y);

template <class T>
void dense_forward_serial(const nn::Matrix<T>& W, const nn::Vector<T>& b, const nn::Matrix<T>& X,
                          nn::Activation act, nn::Matrix<T>& Y);

/// Columns per OpenMP work item.
inline constexpr int kColumnBlock = 32;

int max_threads();

}  // namespace softquad::kernels
