#include "stflow/stgcn.hpp"

#include <cmath>
#include <random>

#include "stflow/autodiff/ops.hpp"
#include "stflow/error.hpp"

namespace stflow::stgcn {

namespace {

template <typename Fn>
Tensor named_layer(const std::string& layer, Fn&& fn) {
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError("layer " + layer + ": " + e.what());
  }
}

bool is_bias(const ad::Shape& s) { return s.size() == 1; }

// Glorot fan sizes: a temporal kernel [Kt, Cin, Cout] has receptive field Kt.
std::pair<double, double> fans(const ad::Shape& s) {
  if (s.size() == 3) return {static_cast<double>(s[0] * s[1]), static_cast<double>(s[0] * s[2])};
  return {static_cast<double>(s[0]), static_cast<double>(s[1])};
}

}  // namespace

void STGCNConfig::validate() const {
  if (history_steps == 0 || horizon_steps == 0 || temporal_kernel == 0 || c_in == 0 || c_t1 == 0 ||
      c_s == 0 || c_t2 == 0 || n_blocks == 0) {
    throw ParameterError("STGCN sizes must all be at least 1");
  }
  const std::size_t shrink = n_blocks * 2 * (temporal_kernel - 1);
  if (history_steps < shrink + 1) {
    throw ParameterError("history of " + std::to_string(history_steps) + " steps does not survive " +
                         std::to_string(n_blocks) + " block(s) with temporal kernel " +
                         std::to_string(temporal_kernel));
  }
}

std::size_t STGCNConfig::output_time_length() const {
  return history_steps - n_blocks * 2 * (temporal_kernel - 1);
}

std::vector<ad::Shape> parameter_shapes(const STGCNConfig& c) {
  c.validate();
  std::vector<ad::Shape> shapes;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    const std::size_t in = b == 0 ? c.c_in : c.c_t2;
    shapes.push_back({c.temporal_kernel, in, 2 * c.c_t1});
    shapes.push_back({2 * c.c_t1});
    shapes.push_back({c.c_t1, c.c_s});
    shapes.push_back({c.c_s});
    shapes.push_back({c.temporal_kernel, c.c_s, 2 * c.c_t2});
    shapes.push_back({2 * c.c_t2});
  }
  shapes.push_back({c.output_time_length(), c.c_t2, 2 * c.c_t2});
  shapes.push_back({2 * c.c_t2});
  shapes.push_back({c.c_t2, c.horizon_steps});
  shapes.push_back({c.horizon_steps});
  return shapes;
}

std::size_t parameter_count(const STGCNConfig& config) {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(config)) n += ad::element_count(s);
  return n;
}

std::vector<Tensor> ModelParams::flat() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks) {
    out.insert(out.end(), {b.temporal1_kernel, b.temporal1_bias, b.spatial_theta, b.spatial_bias,
                           b.temporal2_kernel, b.temporal2_bias});
  }
  out.insert(out.end(), {output_kernel, output_bias, fc_weight, fc_bias});
  return out;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : flat()) n += t.numel();
  return n;
}

namespace {

ModelParams assemble(std::vector<Tensor> tensors, std::size_t n_blocks) {
  ModelParams p;
  std::size_t i = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    BlockParams bp;
    bp.temporal1_kernel = tensors[i++];
    bp.temporal1_bias = tensors[i++];
    bp.spatial_theta = tensors[i++];
    bp.spatial_bias = tensors[i++];
    bp.temporal2_kernel = tensors[i++];
    bp.temporal2_bias = tensors[i++];
    p.blocks.push_back(std::move(bp));
  }
  p.output_kernel = tensors[i++];
  p.output_bias = tensors[i++];
  p.fc_weight = tensors[i++];
  p.fc_bias = tensors[i++];
  return p;
}

}  // namespace

ModelParams ModelParams::clone(bool requires_grad) const {
  std::vector<Tensor> copies;
  for (const auto& t : flat()) copies.push_back(t.detach(requires_grad));
  return assemble(std::move(copies), blocks.size());
}

ModelParams init_params(const STGCNConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // 53 random bits -> [0, 1); avoids implementation-defined distributions.
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<Tensor> tensors;
  for (const auto& shape : parameter_shapes(config)) {
    std::vector<double> values(ad::element_count(shape), 0.0);
    if (!is_bias(shape)) {
      const auto [fan_in, fan_out] = fans(shape);
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : values) v = (2.0 * unit() - 1.0) * bound;
    }
    tensors.push_back(Tensor::from_values(shape, std::move(values), true));
  }
  return assemble(std::move(tensors), config.n_blocks);
}

ModelParams params_from_flat(const STGCNConfig& config, std::span<const double> values) {
  const auto shapes = parameter_shapes(config);
  std::vector<Tensor> tensors;
  std::size_t offset = 0;
  for (const auto& shape : shapes) {
    const std::size_t n = ad::element_count(shape);
    if (offset + n > values.size()) {
      throw DataError("parameter payload holds " + std::to_string(values.size()) +
                      " values, config needs " + std::to_string(parameter_count(config)));
    }
    tensors.push_back(Tensor::from_values(
        shape, std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                   values.begin() + static_cast<std::ptrdiff_t>(offset + n)),
        true));
    offset += n;
  }
  if (offset != values.size()) {
    throw DataError("parameter payload holds " + std::to_string(values.size()) +
                    " values, config needs " + std::to_string(offset));
  }
  return assemble(std::move(tensors), config.n_blocks);
}

Tensor temporal_gated_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  return ad::glu(ad::conv1d_time(x, kernel, bias));
}

Tensor spatial_graph_conv(const Tensor& x, const Tensor& p, const Tensor& theta, const Tensor& bias) {
  if (x.rank() != 4 || p.rank() != 2 || p.dim(0) != x.dim(2) || p.dim(1) != x.dim(2)) {
    throw ShapeError("spatial_graph_conv: operator " + ad::to_string(p.shape()) +
                     " does not match signal " + ad::to_string(x.shape()));
  }
  // p (x theta) == (p x) theta; mixing channels first is cheaper when c_s < c_in.
  return ad::relu(ad::add(ad::node_mix(p, ad::matmul(x, theta)), bias));
}

Tensor st_conv_block(const Tensor& x, const Tensor& p, const BlockParams& block) {
  auto h = named_layer("temporal1", [&] {
    return temporal_gated_conv(x, block.temporal1_kernel, block.temporal1_bias);
  });
  h = named_layer("spatial",
                  [&] { return spatial_graph_conv(h, p, block.spatial_theta, block.spatial_bias); });
  return named_layer("temporal2", [&] {
    return temporal_gated_conv(h, block.temporal2_kernel, block.temporal2_bias);
  });
}

Tensor output_layer(const Tensor& x, const ModelParams& params) {
  if (x.rank() != 4 || params.output_kernel.rank() != 3 || x.dim(1) != params.output_kernel.dim(0)) {
    throw ShapeError("output_layer: kernel " + ad::to_string(params.output_kernel.shape()) +
                     " must span the whole time axis of " + ad::to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t nodes = x.dim(2);
  auto collapsed = temporal_gated_conv(x, params.output_kernel, params.output_bias);
  auto y = ad::add(ad::matmul(collapsed, params.fc_weight), params.fc_bias);  // [B, 1, N, H]
  const std::size_t horizon = params.fc_weight.dim(1);
  return ad::swap_axes(ad::reshape(y, {batch, nodes, horizon}), 1, 2);
}

Tensor forward(const Tensor& x, const Tensor& p, const ModelParams& params,
               const STGCNConfig& config) {
  if (x.rank() != 4 || x.dim(1) != config.history_steps || x.dim(3) != config.c_in ||
      (config.n_nodes != 0 && x.dim(2) != config.n_nodes)) {
    throw ShapeError("layer input: expected [B, " + std::to_string(config.history_steps) + ", " +
                     (config.n_nodes ? std::to_string(config.n_nodes) : std::string("N")) + ", " +
                     std::to_string(config.c_in) + "], got " + ad::to_string(x.shape()));
  }
  if (params.blocks.size() != config.n_blocks) {
    throw ShapeError("layer input: parameters hold " + std::to_string(params.blocks.size()) +
                     " blocks, config says " + std::to_string(config.n_blocks));
  }
  Tensor h = x;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    h = named_layer("block" + std::to_string(b), [&] { return st_conv_block(h, p, params.blocks[b]); });
  }
  return named_layer("output", [&] { return output_layer(h, params); });
}

}  // namespace stflow::stgcn
