#include "swae/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace swae {

AdamState AdamState::init(const std::vector<const Tensor*>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Tensor* p : params) {
    state.m.push_back(Tensor::zeros(p->shape));
    state.v.push_back(Tensor::zeros(p->shape));
  }
  return state;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads,
               const std::vector<std::string>& names, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != names.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  for (size_t p = 0; p < params.size(); ++p) {
    if (grads[p]->size() != params[p]->data.size()) {
      throw std::invalid_argument("adam_step: gradient size mismatch for " + names[p]);
    }
    for (double gv : *grads[p]) {
      if (!std::isfinite(gv)) {
        throw std::runtime_error("non-finite gradient for parameter " + names[p]);
      }
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p]->data;
    auto& m = state.m[p].data;
    auto& v = state.v[p].data;
    const auto& g = *grads[p];
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace swae
