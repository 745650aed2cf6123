#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "stflow/autodiff/tensor.hpp"

namespace stflow::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Denominator floor: below this gradient magnitude the error is absolute.
/// Central differences at h = 1e-6 carry about eps * |f| / h ~ 1e-10 of
/// round-off for |f| ~ 1, so smaller gradients cannot be resolved to 1e-5
/// relative.
inline constexpr double kGradCheckFloor = 1e-5;

/// Compares tape gradients of scalar `f` against central differences with
/// step `h` for every coordinate of every tensor in `params`. The error per
/// coordinate is |a - n| / max(|a|, |n|, kGradCheckFloor). Parameter values
/// are restored and gradients cleared afterwards.
GradCheckResult finite_difference_check(const std::function<Tensor()>& f,
                                        std::span<Tensor> params, double h = 1e-6);

}  // namespace stflow::ad
