#pragma once

#include "stflow/autodiff/tensor.hpp"

namespace stflow::ad {

// Elementwise. `b` may also be a vector matching a's trailing axis (bias).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

/// [..., m, k] x [k, n] -> [..., m, n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Applies an [N, N] operator along the node axis of x: [..., N, C].
/// out[..., i, c] = sum_j p[i, j] * x[..., j, c].
Tensor node_mix(const Tensor& p, const Tensor& x);

/// Valid convolution along time, independently per node.
/// x: [B, T, N, Cin], kernel: [Kt, Cin, Cout], bias: [Cout] -> [B, T-Kt+1, N, Cout].
Tensor conv1d_time(const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// Splits the last axis into halves P | Q and returns P * sigmoid(Q).
Tensor glu(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Mean squared error over all elements; scalar result.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Same storage order, new shape of equal element count.
Tensor reshape(const Tensor& a, Shape shape);

/// Exchanges two axes (materialized copy).
Tensor swap_axes(const Tensor& a, std::size_t axis_a, std::size_t axis_b);

}  // namespace stflow::ad
