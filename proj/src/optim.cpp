#include "stfd/optim.hpp"

#include <cmath>

namespace stfd {

template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, const AdamConfig& cfg) {
  for (const auto& e : params) {
    if (e.tensor.requires_grad() && !e.tensor.has_grad()) {
      throw UsageError("adam_step: parameter '" + e.name + "' has no gradient");
    }
  }
  const std::int64_t t = ++params.adam_step_count;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (auto& e : params) {
    if (!e.tensor.requires_grad()) continue;
    const Vec<Scalar>& g = e.tensor.grad();
    if (e.adam_m.size() != g.size()) {
      e.adam_m = Vec<Scalar>::Zero(g.size());
      e.adam_v = Vec<Scalar>::Zero(g.size());
    }
    e.adam_m = b1 * e.adam_m + (Scalar(1) - b1) * g;
    e.adam_v = b2 * e.adam_v + (Scalar(1) - b2) * g.square();
    e.tensor.value() -= lr * (e.adam_m / c1) / ((e.adam_v / c2).sqrt() + eps);
  }
}

template void adam_step(ParamStore<float>&, const AdamConfig&);
template void adam_step(ParamStore<double>&, const AdamConfig&);

}  // namespace stfd
