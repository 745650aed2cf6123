#include "stflow/autodiff/ops.hpp"

#include <Eigen/Core>
#include <array>
#include <cmath>

#include "stflow/error.hpp"

namespace stflow::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using detail::Node;

// Gradient buffer of input i, or nullptr when that input is a constant.
double* input_grad(Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

const double* input_value(const Node& self, std::size_t i) { return self.inputs[i]->value.data(); }

bool is_trailing_vector(const Tensor& a, const Tensor& b) {
  return b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape().back();
}

enum class Broadcast { kSame, kTrailing };

Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (is_trailing_vector(a, b)) return Broadcast::kTrailing;
  throw ShapeError(std::string(op) + ": cannot combine " + to_string(a.shape()) + " with " +
                   to_string(b.shape()));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t leading_count(const Shape& s, std::size_t trailing_axes) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + trailing_axes < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto mode = check_binary(a, b, "add");
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t n = av.size();
  const std::size_t period = bv.size();
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[mode == Broadcast::kSame ? i : i % period];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add", [n, period](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (double* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) gb[i % period] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto mode = check_binary(a, b, "sub");
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t n = av.size();
  const std::size_t period = bv.size();
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[mode == Broadcast::kSame ? i : i % period];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "sub", [n, period](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (double* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) gb[i % period] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto mode = check_binary(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t n = av.size();
  const std::size_t period = bv.size();
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[mode == Broadcast::kSame ? i : i % period];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "mul", [n, period](Node& self) {
    const double* g = self.grad.data();
    const double* x = input_value(self, 0);
    const double* y = input_value(self, 1);
    if (double* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i % period];
    }
    if (double* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) gb[i % period] += g[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  Buffer out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, "scale", [factor](Node& self) {
    double* ga = input_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  Buffer out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(av[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, "sigmoid", [](Node& self) {
    double* ga = input_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      ga[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor relu(const Tensor& a) {
  Buffer out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return Tensor::make_result(a.shape(), std::move(out), {a}, "relu", [](Node& self) {
    double* ga = input_grad(self, 0);
    const double* x = input_value(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (x[i] > 0.0) ga[i] += self.grad[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const auto rows = static_cast<Eigen::Index>(leading_count(a.shape(), 1));
  const auto k = static_cast<Eigen::Index>(b.dim(0));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Shape shape = a.shape();
  shape.back() = b.dim(1);
  Buffer out(static_cast<std::size_t>(rows * n));
  MapMat(out.data(), rows, n).noalias() =
      ConstMapMat(a.values().data(), rows, k) * ConstMapMat(b.values().data(), k, n);
  return Tensor::make_result(std::move(shape), std::move(out), {a, b}, "matmul",
                             [rows, k, n](Node& self) {
                               ConstMapMat g(self.grad.data(), rows, n);
                               if (double* ga = input_grad(self, 0)) {
                                 MapMat(ga, rows, k).noalias() +=
                                     g * ConstMapMat(input_value(self, 1), k, n).transpose();
                               }
                               if (double* gb = input_grad(self, 1)) {
                                 MapMat(gb, k, n).noalias() +=
                                     ConstMapMat(input_value(self, 0), rows, k).transpose() * g;
                               }
                             });
}

Tensor node_mix(const Tensor& p, const Tensor& x) {
  if (p.rank() != 2 || p.dim(0) != p.dim(1) || x.rank() < 2 || x.dim(x.rank() - 2) != p.dim(0)) {
    throw ShapeError("node_mix: operator " + to_string(p.shape()) + " does not match signal " +
                     to_string(x.shape()));
  }
  const auto nodes = static_cast<Eigen::Index>(p.dim(0));
  const auto channels = static_cast<Eigen::Index>(x.shape().back());
  const std::size_t slices = leading_count(x.shape(), 2);
  const auto slab = static_cast<std::size_t>(nodes * channels);
  Buffer out(x.numel());
  ConstMapMat pm(p.values().data(), nodes, nodes);
  for (std::size_t s = 0; s < slices; ++s) {
    MapMat(out.data() + s * slab, nodes, channels).noalias() =
        pm * ConstMapMat(x.values().data() + s * slab, nodes, channels);
  }
  return Tensor::make_result(x.shape(), std::move(out), {p, x}, "node_mix",
                             [nodes, channels, slices, slab](Node& self) {
                               ConstMapMat pm(input_value(self, 0), nodes, nodes);
                               double* gp = input_grad(self, 0);
                               double* gx = input_grad(self, 1);
                               const double* xv = input_value(self, 1);
                               for (std::size_t s = 0; s < slices; ++s) {
                                 ConstMapMat g(self.grad.data() + s * slab, nodes, channels);
                                 if (gx) {
                                   MapMat(gx + s * slab, nodes, channels).noalias() +=
                                       pm.transpose() * g;
                                 }
                                 if (gp) {
                                   MapMat(gp, nodes, nodes).noalias() +=
                                       g * ConstMapMat(xv + s * slab, nodes, channels).transpose();
                                 }
                               }
                             });
}

Tensor conv1d_time(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 4 || kernel.rank() != 3 || bias.rank() != 1 || kernel.dim(1) != x.dim(3) ||
      bias.dim(0) != kernel.dim(2)) {
    throw ShapeError("conv1d_time: input " + to_string(x.shape()) + ", kernel " +
                     to_string(kernel.shape()) + ", bias " + to_string(bias.shape()));
  }
  const std::size_t batch = x.dim(0), steps = x.dim(1), nodes = x.dim(2);
  const std::size_t kt = kernel.dim(0);
  const auto cin = static_cast<Eigen::Index>(kernel.dim(1));
  const auto cout = static_cast<Eigen::Index>(kernel.dim(2));
  if (steps < kt) {
    throw ShapeError("conv1d_time: time length " + std::to_string(steps) + " shorter than kernel " +
                     std::to_string(kt));
  }
  const std::size_t out_steps = steps - kt + 1;
  const auto out_rows = static_cast<Eigen::Index>(out_steps * nodes);
  const std::size_t in_batch_stride = steps * nodes * static_cast<std::size_t>(cin);
  const std::size_t out_batch_stride = out_steps * nodes * static_cast<std::size_t>(cout);
  const std::size_t tau_stride = nodes * static_cast<std::size_t>(cin);
  const std::size_t kernel_stride = static_cast<std::size_t>(cin * cout);

  // For each batch item the rows (t, n) of the output are a contiguous
  // window of input rows shifted by tau * N, so every tap is one GEMM.
  Buffer out(batch * out_batch_stride);
  Eigen::Map<const Eigen::RowVectorXd> bv(bias.values().data(), cout);
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat ob(out.data() + b * out_batch_stride, out_rows, cout);
    ob.rowwise() = bv;
    for (std::size_t tau = 0; tau < kt; ++tau) {
      ob.noalias() += ConstMapMat(x.values().data() + b * in_batch_stride + tau * tau_stride, out_rows, cin) *
                      ConstMapMat(kernel.values().data() + tau * kernel_stride, cin, cout);
    }
  }
  Shape shape{batch, out_steps, nodes, static_cast<std::size_t>(cout)};
  return Tensor::make_result(
      std::move(shape), std::move(out), {x, kernel, bias}, "conv1d_time",
      [=](Node& self) {
        const double* xv = input_value(self, 0);
        const double* kv = input_value(self, 1);
        double* gx = input_grad(self, 0);
        double* gk = input_grad(self, 1);
        double* gb = input_grad(self, 2);
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMapMat g(self.grad.data() + b * out_batch_stride, out_rows, cout);
          if (gb) Eigen::Map<Eigen::RowVectorXd>(gb, cout) += g.colwise().sum();
          for (std::size_t tau = 0; tau < kt; ++tau) {
            if (gk) {
              MapMat(gk + tau * kernel_stride, cin, cout).noalias() +=
                  ConstMapMat(xv + b * in_batch_stride + tau * tau_stride, out_rows, cin).transpose() * g;
            }
            if (gx) {
              MapMat(gx + b * in_batch_stride + tau * tau_stride, out_rows, cin).noalias() +=
                  g * ConstMapMat(kv + tau * kernel_stride, cin, cout).transpose();
            }
          }
        }
      });
}

Tensor glu(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() % 2 != 0) {
    throw ShapeError("glu: last axis must be even, got " + to_string(x.shape()));
  }
  const std::size_t width = x.shape().back();
  const std::size_t half = width / 2;
  const std::size_t rows = x.numel() / width;
  Shape shape = x.shape();
  shape.back() = half;
  Buffer out(rows * half);
  Buffer gate(rows * half);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < half; ++c) {
      const double s = stable_sigmoid(xv[r * width + half + c]);
      gate[r * half + c] = s;
      out[r * half + c] = xv[r * width + c] * s;
    }
  }
  return Tensor::make_result(std::move(shape), std::move(out), {x}, "glu",
                             [rows, half, width, gate = std::move(gate)](Node& self) {
                               double* gx = input_grad(self, 0);
                               const double* xv = input_value(self, 0);
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t c = 0; c < half; ++c) {
                                   const double g = self.grad[r * half + c];
                                   const double s = gate[r * half + c];
                                   gx[r * width + c] += g * s;
                                   gx[r * width + half + c] += g * xv[r * width + c] * s * (1.0 - s);
                                 }
                               }
                             });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::make_result({}, {total}, {a}, "sum", [](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (double& g : ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  const std::size_t n = pred.numel();
  if (n == 0) throw ShapeError("mse_loss of empty tensors");
  const auto p = pred.values();
  const auto t = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  return Tensor::make_result({}, {acc / static_cast<double>(n)}, {pred, target}, "mse_loss",
                             [n](Node& self) {
                               const double* p = input_value(self, 0);
                               const double* t = input_value(self, 1);
                               const double coeff = 2.0 * self.grad[0] / static_cast<double>(n);
                               if (double* gp = input_grad(self, 0)) {
                                 for (std::size_t i = 0; i < n; ++i) gp[i] += coeff * (p[i] - t[i]);
                               }
                               if (double* gt = input_grad(self, 1)) {
                                 for (std::size_t i = 0; i < n; ++i) gt[i] -= coeff * (p[i] - t[i]);
                               }
                             });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  }
  Buffer out(a.values().begin(), a.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, "reshape", [](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor swap_axes(const Tensor& a, std::size_t axis_a, std::size_t axis_b) {
  const std::size_t rank = a.rank();
  if (axis_a >= rank || axis_b >= rank) {
    throw ShapeError("swap_axes: axes " + std::to_string(axis_a) + "," + std::to_string(axis_b) +
                     " on " + to_string(a.shape()));
  }
  // Pad to four axes so one index loop handles every rank.
  std::array<std::size_t, kMaxRank> in_shape{1, 1, 1, 1};
  const std::size_t pad = kMaxRank - rank;
  for (std::size_t i = 0; i < rank; ++i) in_shape[pad + i] = a.dim(i);
  std::array<std::size_t, kMaxRank> in_stride{};
  in_stride[3] = 1;
  for (int i = 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  auto out_shape = in_shape;
  std::swap(out_shape[pad + axis_a], out_shape[pad + axis_b]);
  auto src_stride = in_stride;
  std::swap(src_stride[pad + axis_a], src_stride[pad + axis_b]);

  std::vector<std::size_t> gather(a.numel());
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < out_shape[0]; ++i0)
    for (std::size_t i1 = 0; i1 < out_shape[1]; ++i1)
      for (std::size_t i2 = 0; i2 < out_shape[2]; ++i2)
        for (std::size_t i3 = 0; i3 < out_shape[3]; ++i3)
          gather[o++] = i0 * src_stride[0] + i1 * src_stride[1] + i2 * src_stride[2] + i3 * src_stride[3];

  Buffer out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[gather[i]];
  Shape shape = a.shape();
  std::swap(shape[axis_a], shape[axis_b]);
  return Tensor::make_result(std::move(shape), std::move(out), {a}, "swap_axes",
                             [gather = std::move(gather)](Node& self) {
                               auto& ga = self.inputs[0]->ensure_grad();
                               for (std::size_t i = 0; i < gather.size(); ++i) ga[gather[i]] += self.grad[i];
                             });
}

}  // namespace stflow::ad
