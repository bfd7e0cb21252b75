#pragma once

#include "stfd/tensor.hpp"

namespace stfd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every requires_grad entry of `params`.
// Moment estimates live in the store entries. Throws UsageError when a
// trainable parameter has no gradient slot (backward never reached it).
template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, const AdamConfig& cfg = {});

}  // namespace stfd
