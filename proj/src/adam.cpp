#include "latentflow/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace latentflow {

AdamState adam_init(const std::vector<Tensor*>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Tensor* p : params) {
    state.m.push_back(Tensor::zeros(p->shape()));
    state.v.push_back(Tensor::zeros(p->shape()));
  }
  return state;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params vs " +
                                std::to_string(grads.size()) + " grads vs " +
                                std::to_string(state.m.size()) + " moment buffers");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p];
    const Tensor& grad = grads[p];
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    if (param.shape() != grad.shape() || param.shape() != m.shape()) {
      throw std::invalid_argument("adam_step: shape mismatch at param " + std::to_string(p) +
                                  ": " + shape_str(param.shape()) + " vs grad " +
                                  shape_str(grad.shape()) + " vs state " + shape_str(m.shape()));
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace latentflow
