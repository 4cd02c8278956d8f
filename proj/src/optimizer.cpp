#include "adapterlab/optimizer.hpp"

#include <cmath>

#include "adapterlab/errors.hpp"

namespace adapterlab {

void adam_step(ParameterMap& trainable, const ParameterMap& frozen, AdamState& state, const AdamConfig& config,
               double lr) {
  for (const auto& [name, t] : frozen) {
    if (t.has_grad()) throw ContractError("freezing breach: frozen parameter '" + name + "' carries a gradient");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, param] : trainable) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) {
      m.assign(param.numel(), 0.0);
      v.assign(param.numel(), 0.0);
    }
    auto values = param.mutable_values();
    auto grad = param.grad();
    const bool has_grad = !grad.empty();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
    }
    for (double x : values) {
      if (!std::isfinite(x)) throw NumericError("adam update produced a non-finite value in '" + name + "'");
    }
  }
}

}  // namespace adapterlab
