#pragma once

#include <array>
#include <vector>

#include "stfd/tensor.hpp"

// Differentiable operations. Every function records what its backward pass
// needs and returns a fresh tensor; inputs are never modified (batch_norm's
// running statistics are the one documented exception).
namespace stfd {

enum class Mode { Train, Eval };

struct Conv2dOptions {
  std::array<Index, 2> stride{1, 1};
  std::array<Index, 2> pad{0, 0};
  Index groups = 1;
};

// Clamp applied to sigmoid outputs so that log(p) and log(1-p) stay finite.
inline constexpr double kProbEps = 1e-7;

template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> scale(const Tensor<S>& a, S factor);
template <typename S> Tensor<S> sum(const Tensor<S>& a);
template <typename S> Tensor<S> mean(const Tensor<S>& a);

template <typename S> Tensor<S> reshape(const Tensor<S>& a, Shape shape);
template <typename S> Tensor<S> permute(const Tensor<S>& a, const std::vector<int>& axes);
template <typename S> Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis);

template <typename S> Tensor<S> relu(const Tensor<S>& x);
template <typename S> Tensor<S> leaky_relu(const Tensor<S>& x, S slope);
// Logistic function clamped to [kProbEps, 1 - kProbEps]; zero gradient where clamped.
template <typename S> Tensor<S> sigmoid(const Tensor<S>& x);

// x: (N, F_in), w: (F_out, F_in), b: (F_out) or undefined.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);

// x: (C_in, L) or (N, C_in, L); w: (C_out, C_in, K); b: (C_out) or undefined.
template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Index stride,
                 Index pad);

// x: (C_in, H, W) or (N, C_in, H, W); w: (C_out, C_in / groups, Kh, Kw).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 const Conv2dOptions& opts = {});

// x: (N, C, ...). Train mode normalizes with batch statistics over every axis
// but 1 and folds them into the running buffers with `momentum`; Eval mode
// uses the running buffers.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, Mode mode,
                     S momentum = S(0.1), S eps = S(1e-5));

// Normalizes across `axis` independently at every position of the other axes,
// then applies a per-index affine transform along `axis`.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, int axis,
                     S eps = S(1e-5));

// Mean over axes [first_axis, rank).
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x, int first_axis);

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator*(S factor, const Tensor<S>& a) { return scale(a, factor); }

}  // namespace stfd
