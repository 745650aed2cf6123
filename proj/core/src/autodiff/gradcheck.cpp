#include "stflow/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stflow::ad {

GradCheckResult finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                        double h) {
  for (auto& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    const auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    analytic.back().resize(p.numel(), 0.0);
    p.zero_grad();
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double err = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_relative_error || result.coordinates == 1) {
        result.max_relative_error = err;
        result.worst_param = k;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace stflow::ad
