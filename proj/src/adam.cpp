#include "dropforge/adam.hpp"

#include <cmath>

#include "dropforge/errors.hpp"

namespace dropforge {

void adam_step(std::span<NamedTensor> params, OptimizerState& state, const AdamConfig& cfg) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.value.grad());
    for (double g : grads.back()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + p.name);
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& slot = state.slots[p.name];
    auto values = p.value.mutable_data();
    if (slot.m.size() != values.size()) {
      slot.m.assign(values.size(), 0.0);
      slot.v.assign(values.size(), 0.0);
      slot.step = 0;
    }
    ++slot.step;
    const double t = static_cast<double>(slot.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const auto& g = grads[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      slot.m[j] = cfg.beta1 * slot.m[j] + (1.0 - cfg.beta1) * g[j];
      slot.v[j] = cfg.beta2 * slot.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = slot.m[j] / c1;
      const double v_hat = slot.v[j] / c2;
      values[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace dropforge
