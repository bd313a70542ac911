#pragma once

#include <cstddef>
#include <vector>

#include "latentflow/tensor.hpp"

namespace latentflow {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers mirror the parameter shapes.
struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

AdamState adam_init(const std::vector<Tensor*>& params);

// Standard Adam update with bias correction; increments state.step by 1.
// Throws on any shape disagreement between params, grads, and state.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& config);

}  // namespace latentflow
