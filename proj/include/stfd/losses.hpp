#pragma once

#include <Eigen/Core>

#include <utility>

#include "stfd/errors.hpp"
#include "stfd/rng.hpp"
#include "stfd/tensor.hpp"

namespace stfd {

// Mean binary cross-entropy -[y log p + (1 - y) log(1 - p)] over all elements.
// p is clamped to [kProbEps, 1 - kProbEps]; y may be soft (mixup targets).
template <typename S>
Tensor<S> bce(const Tensor<S>& p, const Tensor<S>& y);

// Mean of (p_t - y_t)^2.
template <typename S>
Tensor<S> mse_frames(const Tensor<S>& p, const Tensor<S>& y);

// 1 - (sum p y + s) / (sum p + sum y - sum p y + s), evaluated per row of the
// last axis and averaged over rows. Differentiable in p only.
template <typename S>
Tensor<S> soft_iou_loss(const Tensor<S>& p, const Tensor<S>& y, S smooth = S(1e-6));

// mse_frames + beta * soft_iou_loss; beta == 0 leaves the IoU term out entirely.
template <typename S>
Tensor<S> streaming_loss(const Tensor<S>& p, const Tensor<S>& y, S beta = S(1));

struct MixupConfig {
  double alpha = 0.2;
  bool enabled = true;
};

// lambda ~ Beta(alpha, alpha).
inline double sample_mixup_lambda(SplitMix64& rng, const MixupConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw ConfigError("mixup.alpha must be positive");
  return sample_beta(rng, cfg.alpha, cfg.alpha);
}

// (lambda x1 + (1 - lambda) x2, lambda y1 + (1 - lambda) y2).
template <typename XDerived, typename YDerived>
std::pair<typename XDerived::PlainObject, typename YDerived::PlainObject> mixup(
    const Eigen::DenseBase<XDerived>& x1, const Eigen::DenseBase<YDerived>& y1,
    const Eigen::DenseBase<XDerived>& x2, const Eigen::DenseBase<YDerived>& y2, double lambda) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols()) throw ShapeError("mixup: inputs differ in shape");
  if (y1.rows() != y2.rows() || y1.cols() != y2.cols()) throw ShapeError("mixup: labels differ in shape");
  using XS = typename XDerived::Scalar;
  using YS = typename YDerived::Scalar;
  const auto lx = static_cast<XS>(lambda);
  const auto ly = static_cast<YS>(lambda);
  typename XDerived::PlainObject x = x1.derived() * lx + x2.derived() * (XS(1) - lx);
  typename YDerived::PlainObject y = y1.derived() * ly + y2.derived() * (YS(1) - ly);
  return {std::move(x), std::move(y)};
}

}  // namespace stfd
