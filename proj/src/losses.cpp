#include "stfd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "stfd/ops.hpp"

namespace stfd {
namespace {

template <typename S>
void require_same(const Tensor<S>& p, const Tensor<S>& y, const char* op) {
  if (p.shape() != y.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + to_string(p.shape()) + " vs target " +
                     to_string(y.shape()));
  }
  if (p.size() < 1) throw ShapeError(std::string(op) + ": empty input");
}

}  // namespace

template <typename S>
Tensor<S> bce(const Tensor<S>& p, const Tensor<S>& y) {
  require_same(p, y, "bce");
  const S lo = static_cast<S>(kProbEps);
  const S hi = S(1) - lo;
  const Index n = p.size();
  S total(0);
  for (Index i = 0; i < n; ++i) {
    const S q = std::clamp(p.value()[i], lo, hi);
    const S t = y.value()[i];
    total -= t * std::log(q) + (S(1) - t) * std::log(S(1) - q);
  }
  Vec<S> v(1);
  v[0] = total / static_cast<S>(n);
  return Tensor<S>::from_op(Shape{}, std::move(v), {p.node(), y.node()},
                            [n, lo, hi](detail::Node<S>& self) {
                              auto& pp = *self.parents[0];
                              const auto& yv = self.parents[1]->value;
                              if (!pp.requires_grad) return;
                              auto& g = pp.grad_slot();
                              const S scale = self.grad[0] / static_cast<S>(n);
                              for (Index i = 0; i < n; ++i) {
                                const S q = pp.value[i];
                                if (q < lo || q > hi) continue;
                                g[i] += scale * (-yv[i] / q + (S(1) - yv[i]) / (S(1) - q));
                              }
                            });
}

template <typename S>
Tensor<S> mse_frames(const Tensor<S>& p, const Tensor<S>& y) {
  require_same(p, y, "mse_frames");
  const Index n = p.size();
  Vec<S> v(1);
  v[0] = (p.value() - y.value()).square().sum() / static_cast<S>(n);
  return Tensor<S>::from_op(Shape{}, std::move(v), {p.node(), y.node()}, [n](detail::Node<S>& self) {
    auto& pp = *self.parents[0];
    if (!pp.requires_grad) return;
    const S scale = S(2) * self.grad[0] / static_cast<S>(n);
    pp.grad_slot() += scale * (pp.value - self.parents[1]->value);
  });
}

template <typename S>
Tensor<S> soft_iou_loss(const Tensor<S>& p, const Tensor<S>& y, S smooth) {
  require_same(p, y, "soft_iou_loss");
  const Index len = p.rank() == 0 ? 1 : p.shape().back();
  const Index rows = p.size() / len;
  Vec<S> inter(rows), uni(rows);
  S total(0);
  for (Index r = 0; r < rows; ++r) {
    const auto pr = p.value().segment(r * len, len);
    const auto yr = y.value().segment(r * len, len);
    inter[r] = (pr * yr).sum();
    uni[r] = pr.sum() + yr.sum() - inter[r];
    total += S(1) - (inter[r] + smooth) / (uni[r] + smooth);
  }
  Vec<S> v(1);
  v[0] = total / static_cast<S>(rows);
  return Tensor<S>::from_op(
      Shape{}, std::move(v), {p.node(), y.node()},
      [len, rows, smooth, inter = std::move(inter), uni = std::move(uni)](detail::Node<S>& self) {
        auto& pp = *self.parents[0];
        if (!pp.requires_grad) return;
        const auto& yv = self.parents[1]->value;
        auto& g = pp.grad_slot();
        const S scale = self.grad[0] / static_cast<S>(rows);
        for (Index r = 0; r < rows; ++r) {
          const S a = inter[r] + smooth;
          const S b = uni[r] + smooth;
          // d/dp_t of -(a / b) with da/dp_t = y_t and db/dp_t = 1 - y_t.
          for (Index t = 0; t < len; ++t) {
            const S yt = yv[r * len + t];
            g[r * len + t] += scale * -(yt * b - a * (S(1) - yt)) / (b * b);
          }
        }
      });
}

template <typename S>
Tensor<S> streaming_loss(const Tensor<S>& p, const Tensor<S>& y, S beta) {
  if (!(beta >= S(0))) throw ConfigError("loss.beta must be >= 0");
  Tensor<S> loss = mse_frames(p, y);
  if (beta == S(0)) return loss;
  return add(loss, scale(soft_iou_loss(p, y), beta));
}

template Tensor<float> bce(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bce(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> mse_frames(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_frames(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> soft_iou_loss(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> soft_iou_loss(const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> streaming_loss(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> streaming_loss(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace stfd
