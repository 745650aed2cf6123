#include "stflow/autodiff/adam.hpp"

#include <cmath>
#include <string>

#include "stflow/error.hpp"

namespace stflow::ad {

AdamState make_adam_state(std::span<const Tensor> params, const AdamOptions& options) {
  if (!(options.lr > 0.0)) throw ParameterError("Adam learning rate must be positive");
  if (!(options.beta1 >= 0.0 && options.beta1 < 1.0) || !(options.beta2 >= 0.0 && options.beta2 < 1.0)) {
    throw ParameterError("Adam betas must lie in [0, 1)");
  }
  if (!(options.eps > 0.0)) throw ParameterError("Adam eps must be positive");
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  const auto& o = state.options;
  if (!(o.lr > 0.0)) throw ParameterError("Adam learning rate must be positive");
  if (params.size() != state.first_moment.size()) {
    throw ParameterError("Adam state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    auto values = params[k].mutable_values();
    if (m.size() != values.size()) {
      throw ShapeError("Adam moment size differs from parameter " + std::to_string(k));
    }
    const auto grad = params[k].grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

}  // namespace stflow::ad
