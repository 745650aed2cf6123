#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stflow/autodiff/tensor.hpp"

namespace stflow::stgcn {

using ad::Tensor;

struct STGCNConfig {
  std::size_t history_steps = 12;  // M
  std::size_t horizon_steps = 1;   // H
  std::size_t temporal_kernel = 3; // Kt
  std::size_t c_in = 1;
  std::size_t c_t1 = 32;
  std::size_t c_s = 16;
  std::size_t c_t2 = 32;
  std::size_t n_blocks = 1;
  std::size_t n_nodes = 0;  // 0 leaves the node count unchecked

  /// Throws ParameterError when the time axis would not survive every
  /// temporal convolution or any size is zero.
  void validate() const;

  /// Time length entering the output layer: M - n_blocks * 2 (Kt - 1).
  std::size_t output_time_length() const;

  bool operator==(const STGCNConfig&) const = default;
};

struct BlockParams {
  Tensor temporal1_kernel;  // [Kt, c_in or c_t2, 2 c_t1]
  Tensor temporal1_bias;    // [2 c_t1]
  Tensor spatial_theta;     // [c_t1, c_s]
  Tensor spatial_bias;      // [c_s]
  Tensor temporal2_kernel;  // [Kt, c_s, 2 c_t2]
  Tensor temporal2_bias;    // [2 c_t2]
};

struct ModelParams {
  std::vector<BlockParams> blocks;
  Tensor output_kernel;  // [M_rem, c_t2, 2 c_t2]
  Tensor output_bias;    // [2 c_t2]
  Tensor fc_weight;      // [c_t2, H]
  Tensor fc_bias;        // [H]

  /// Serialization order: per block (t1 kernel, t1 bias, theta, spatial
  /// bias, t2 kernel, t2 bias), then output kernel, output bias, fc weight,
  /// fc bias.
  std::vector<Tensor> flat() const;
  std::size_t scalar_count() const;

  /// Deep copy with fresh leaves. A frozen copy (requires_grad = false)
  /// evaluates without recording a tape.
  ModelParams clone(bool requires_grad = true) const;
};

/// Shapes of every parameter in flat() order.
std::vector<ad::Shape> parameter_shapes(const STGCNConfig& config);
std::size_t parameter_count(const STGCNConfig& config);

/// Glorot-uniform weights, zero biases. Reproducible from `seed` on any platform.
ModelParams init_params(const STGCNConfig& config, std::uint64_t seed);

/// Parameters with the given shapes holding `values` (flat() order).
ModelParams params_from_flat(const STGCNConfig& config, std::span<const double> values);

/// conv1d_time followed by GLU over channels.
Tensor temporal_gated_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// relu(p . x . theta + bias) for every (batch, time) slice.
Tensor spatial_graph_conv(const Tensor& x, const Tensor& p, const Tensor& theta, const Tensor& bias);

/// Gated temporal conv, spatial graph conv, gated temporal conv.
Tensor st_conv_block(const Tensor& x, const Tensor& p, const BlockParams& block);

/// Gated temporal conv collapsing the time axis, then a node-shared linear
/// map from channels to the horizon. [B, M_rem, N, C] -> [B, H, N].
Tensor output_layer(const Tensor& x, const ModelParams& params);

/// X: [B, M, N, c_in], p: [N, N] -> prediction [B, H, N] in model units.
/// Shape errors name the layer that raised them.
Tensor forward(const Tensor& x, const Tensor& p, const ModelParams& params,
               const STGCNConfig& config);

}  // namespace stflow::stgcn
