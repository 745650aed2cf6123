#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stflow/autodiff/tensor.hpp"

namespace stflow::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Zeroed moments shaped like `params`. Throws ParameterError when lr <= 0
/// or a beta lies outside [0, 1).
AdamState make_adam_state(std::span<const Tensor> params, const AdamOptions& options = {});

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Parameters without a gradient are treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace stflow::ad
