#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swae/tensor.hpp"

namespace swae {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment estimates, one pair per parameter in enumeration
// order, plus the shared step counter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t step = 0;

  static AdamState init(const std::vector<const Tensor*>& params);
};

// Bias-corrected Adam update applied in the given (fixed) parameter order.
// Rejects non-finite gradients, naming the offending parameter.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads,
               const std::vector<std::string>& names, AdamState& state,
               const AdamConfig& cfg);

}  // namespace swae
