#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stflow/autodiff/gradcheck.hpp"
#include "stflow/autodiff/ops.hpp"
#include "stflow/autodiff/tensor.hpp"
#include "stflow/error.hpp"

namespace stflow::ad {
namespace {

constexpr double kTol = 1e-5;

Tensor random_tensor(std::mt19937_64& rng, Shape shape, bool requires_grad = true,
                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(element_count(shape));
  for (double& e : v) e = u(rng);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero, for ops with a kink there.
Tensor away_from_zero(std::mt19937_64& rng, Shape shape) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(element_count(shape));
  for (double& e : v) e = sign(rng) ? u(rng) : -u(rng);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

// Contracts an arbitrary output with fixed random weights so every output
// element contributes a distinct amount to the scalar.
Tensor project(const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, random_tensor(rng, out.shape(), false)));
}

void expect_vals(const Tensor& t, const std::vector<double>& expected, double tol = 0.0) {
  ASSERT_EQ(t.numel(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t.values()[i], expected[i], tol) << i;
}

TEST(Elementwise, SigmoidAtZero) { EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5); }

TEST(Elementwise, ReluNegativeHasZeroGradient) {
  auto x = Tensor::scalar(-3.0, true);
  auto y = relu(x);
  EXPECT_EQ(y.item(), 0.0);
  backward(y);
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Elementwise, SquareGradient) {
  auto x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Elementwise, BiasBroadcastAlongTrailingAxis) {
  auto a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from_values({3}, {10, 20, 30});
  expect_vals(add(a, b), {11, 22, 33, 14, 25, 36});
  expect_vals(sub(a, b), {-9, -18, -27, -6, -15, -24});
  expect_vals(mul(a, b), {10, 40, 90, 40, 100, 180});
}

TEST(Elementwise, MismatchNamesBothShapes) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 2});
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, HandExample) {
  auto a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from_values({2, 2}, {5, 6, 7, 8});
  expect_vals(matmul(a, b), {19, 22, 43, 50});
}

TEST(Matmul, IdentityIsNeutral) {
  std::mt19937_64 rng(1);
  auto a = random_tensor(rng, {2, 3, 4}, false);
  auto eye = Tensor::from_values({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  auto c = matmul(a, eye);
  EXPECT_EQ(c.shape(), (Shape{2, 3, 4}));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(c.values()[i], a.values()[i]);
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  auto a = Tensor::from_values({2, 2}, {1, 2, 3, 4}, true);
  auto b = Tensor::from_values({2, 2}, {5, 6, 7, 8});
  backward(sum(matmul(a, b)));
  // ones(2x2) * b^T: row sums of b
  EXPECT_EQ(std::vector<double>(a.grad().begin(), a.grad().end()), (std::vector<double>{11, 15, 11, 15}));
}

TEST(Matmul, InnerMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Conv1dTime, HandSum) {
  auto x = Tensor::from_values({1, 3, 1, 1}, {1, 2, 3});
  auto k = Tensor::from_values({3, 1, 1}, {1, 1, 1});
  auto y = conv1d_time(x, k, Tensor::zeros({1}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 6.0);
}

TEST(Conv1dTime, UnitKernelIdentityReproducesInput) {
  std::mt19937_64 rng(2);
  auto x = random_tensor(rng, {2, 5, 3, 2}, false);
  auto k = Tensor::from_values({1, 2, 2}, {1, 0, 0, 1});
  auto y = conv1d_time(x, k, Tensor::zeros({2}));
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(Conv1dTime, MatchesDefinitionAndLength) {
  std::mt19937_64 rng(3);
  for (std::size_t kt = 1; kt <= 4; ++kt) {
    auto x = random_tensor(rng, {2, 6, 3, 2}, false);
    auto k = random_tensor(rng, {kt, 2, 3}, false);
    auto b = random_tensor(rng, {3}, false);
    auto y = conv1d_time(x, k, b);
    ASSERT_EQ(y.shape(), (Shape{2, 7 - kt, 3, 3}));
    auto xv = x.values();
    auto kv = k.values();
    for (std::size_t bb = 0; bb < 2; ++bb)
      for (std::size_t t = 0; t + kt <= 6; ++t)
        for (std::size_t n = 0; n < 3; ++n)
          for (std::size_t o = 0; o < 3; ++o) {
            double s = b.values()[o];
            for (std::size_t tau = 0; tau < kt; ++tau)
              for (std::size_t i = 0; i < 2; ++i)
                s += xv[((bb * 6 + t + tau) * 3 + n) * 2 + i] * kv[(tau * 2 + i) * 3 + o];
            EXPECT_NEAR(y.values()[((bb * (7 - kt) + t) * 3 + n) * 3 + o], s, 1e-14);
          }
  }
}

TEST(Conv1dTime, ShortSeriesThrows) {
  EXPECT_THROW(conv1d_time(Tensor::zeros({1, 2, 1, 1}), Tensor::zeros({3, 1, 1}), Tensor::zeros({1})),
               ShapeError);
}

TEST(Glu, ZeroGateHalvesInput) {
  auto x = Tensor::from_values({1, 4}, {2, -6, 0, 0});
  expect_vals(glu(x), {1, -3});
}

TEST(Glu, SaturatedGatePassesInput) {
  auto x = Tensor::from_values({2}, {7, 800});
  EXPECT_EQ(glu(x).item(), 7.0);
}

TEST(Glu, ClosedFormSigmoid) {
  double l3 = std::log(3.0);
  auto x = Tensor::from_values({4}, {2, -4, l3, l3});
  expect_vals(glu(x), {1.5, -3.0}, 1e-15);
}

TEST(Glu, OddChannelsThrow) { EXPECT_THROW(glu(Tensor::zeros({2, 3})), ShapeError); }

TEST(Mse, Examples) {
  auto t = Tensor::from_values({2}, {1, 3});
  EXPECT_EQ(mse_loss(t, t).item(), 0.0);
  EXPECT_EQ(mse_loss(Tensor::zeros({2}), t).item(), 5.0);
  EXPECT_THROW(mse_loss(Tensor::zeros({3}), t), ShapeError);
}

TEST(Backward, UnreachedParameterHasZeroGradient) {
  auto x = Tensor::scalar(2.0, true);
  auto p = Tensor::scalar(5.0, true);
  auto loss = mul(x, x);
  backward(loss);
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, FanOutSums) {
  auto x = Tensor::scalar(1.5, true);
  backward(add(x, x));
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = Tensor::scalar(3.0, true);
  auto y = mul(x, x);
  backward(y);
  backward(y);
  EXPECT_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  backward(y);
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarRootThrows) {
  auto x = Tensor::zeros({2}, true);
  EXPECT_THROW(backward(relu(x)), ShapeError);
}

TEST(Tape, OrdersEveryNodeBeforeItsInputs) {
  auto x = Tensor::scalar(1.0, true);
  auto y = sigmoid(mul(x, x));
  auto tape = Tape::record(sum(y));
  auto names = tape.op_names();
  ASSERT_EQ(names.size(), 4u);
  EXPECT_EQ(names[0], "sum");
  EXPECT_EQ(names[1], "sigmoid");
  EXPECT_EQ(names[2], "mul");
  EXPECT_EQ(names[3], "leaf");
}

TEST(Tape, NoGradientInputsRecordNoBackward) {
  auto a = Tensor::from_values({2}, {1, 2});
  auto y = relu(a);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_FALSE(y.node()->backward);
}

TEST(FiniteCheck, FlagsNonFiniteFromFiniteInputs) {
  FiniteCheckScope on(true);
  auto x = Tensor::scalar(1e300);
  EXPECT_THROW(mul(x, x), NumericalError);
}

TEST(GradCheck, QuadraticFormIsExact) {
  std::mt19937_64 rng(4);
  auto a = random_tensor(rng, {3, 3}, false);
  auto x = random_tensor(rng, {1, 3});
  std::vector<Tensor> params{x};
  auto r = finite_difference_check([&] { return sum(mul(matmul(x, a), x)); }, params);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.coordinates, 3u);
}

TEST(GradCheck, LinearIsRoundOff) {
  std::mt19937_64 rng(5);
  auto x = random_tensor(rng, {4});
  std::vector<Tensor> params{x};
  auto r = finite_difference_check([&] { return project(scale(x, 2.5), 9); }, params);
  // Central differences are exact for linear f; what remains is the
  // eps/h cancellation in f(x+h) - f(x-h), about 1e-10 relative to f.
  EXPECT_LT(r.max_relative_error, 1e-7);
}

TEST(GradCheck, TinyGradientOnUnitLossIsJudgedAbsolutely) {
  // |f| ~ 0.5 with a 3e-7 slope: the difference quotient's round-off is
  // comparable to the gradient itself.
  auto x = Tensor::from_values({1}, {0.3}, true);
  std::vector<Tensor> params{x};
  auto r = finite_difference_check(
      [&] { return sum(add(scale(x, 3e-7), Tensor::from_values({1}, {0.5}))); }, params);
  EXPECT_NEAR(r.analytic, 3e-7, 1e-20);
  EXPECT_LT(r.max_relative_error, 1e-5);
}

struct OpCase {
  const char* name;
  std::function<void(std::mt19937_64&, std::vector<Tensor>&, std::function<Tensor()>&)> build;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::vector<Tensor> params;
    std::function<Tensor()> f;
    GetParam().build(rng, params, f);
    auto r = finite_difference_check(f, params);
    EXPECT_LT(r.max_relative_error, kTol)
        << GetParam().name << " seed " << seed << " param " << r.worst_param << " index "
        << r.worst_index << " analytic " << r.analytic << " numeric " << r.numeric;
  }
}

const OpCase kOpCases[] = {
    {"add", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {2, 3}), b = random_tensor(rng, {2, 3});
       p = {a, b};
       f = [=] { return project(add(a, b), 1); };
     }},
    {"add_bias", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {2, 2, 3}), b = random_tensor(rng, {3});
       p = {a, b};
       f = [=] { return project(add(a, b), 2); };
     }},
    {"sub", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {3, 2}), b = random_tensor(rng, {2});
       p = {a, b};
       f = [=] { return project(sub(a, b), 3); };
     }},
    {"mul", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {2, 3}), b = random_tensor(rng, {2, 3});
       p = {a, b};
       f = [=] { return project(mul(a, b), 4); };
     }},
    {"mul_bias", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {4, 3}), b = random_tensor(rng, {3});
       p = {a, b};
       f = [=] { return project(mul(a, b), 5); };
     }},
    {"scale", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {5});
       p = {a};
       f = [=] { return project(scale(a, -1.7), 6); };
     }},
    {"sigmoid", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {2, 4}, true, -3.0, 3.0);
       p = {a};
       f = [=] { return project(sigmoid(a), 7); };
     }},
    {"relu", [](auto& rng, auto& p, auto& f) {
       auto a = away_from_zero(rng, {3, 4});
       p = {a};
       f = [=] { return project(relu(a), 8); };
     }},
    {"matmul", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {2, 3, 4}), b = random_tensor(rng, {4, 2});
       p = {a, b};
       f = [=] { return project(matmul(a, b), 9); };
     }},
    {"node_mix", [](auto& rng, auto& p, auto& f) {
       auto m = random_tensor(rng, {3, 3}), x = random_tensor(rng, {2, 2, 3, 2});
       p = {m, x};
       f = [=] { return project(node_mix(m, x), 10); };
     }},
    {"conv1d_time", [](auto& rng, auto& p, auto& f) {
       auto x = random_tensor(rng, {2, 5, 3, 2}), k = random_tensor(rng, {3, 2, 4});
       auto b = random_tensor(rng, {4});
       p = {x, k, b};
       f = [=] { return project(conv1d_time(x, k, b), 11); };
     }},
    {"glu", [](auto& rng, auto& p, auto& f) {
       auto x = random_tensor(rng, {2, 3, 4}, true, -2.0, 2.0);
       p = {x};
       f = [=] { return project(glu(x), 12); };
     }},
    {"sum", [](auto& rng, auto& p, auto& f) {
       auto x = random_tensor(rng, {3, 3});
       p = {x};
       f = [=] { return mul(sum(x), sum(x)); };
     }},
    {"mean", [](auto& rng, auto& p, auto& f) {
       auto x = random_tensor(rng, {2, 5});
       p = {x};
       f = [=] { return mul(mean(x), mean(x)); };
     }},
    {"mse_loss", [](auto& rng, auto& p, auto& f) {
       auto a = random_tensor(rng, {2, 3}), b = random_tensor(rng, {2, 3});
       p = {a, b};
       f = [=] { return mse_loss(a, b); };
     }},
    {"reshape", [](auto& rng, auto& p, auto& f) {
       auto x = random_tensor(rng, {2, 6});
       p = {x};
       f = [=] { return project(reshape(x, {3, 4}), 13); };
     }},
    {"swap_axes", [](auto& rng, auto& p, auto& f) {
       auto x = random_tensor(rng, {2, 3, 4});
       p = {x};
       f = [=] { return project(swap_axes(x, 0, 2), 14); };
     }},
    {"composite", [](auto& rng, auto& p, auto& f) {
       auto x = random_tensor(rng, {4, 3}, false);
       auto w1 = random_tensor(rng, {3, 5}), b1 = random_tensor(rng, {5});
       auto w2 = random_tensor(rng, {5, 4}), w3 = random_tensor(rng, {2, 2});
       auto target = random_tensor(rng, {4, 2}, false);
       p = {w1, b1, w2, w3};
       f = [=] {
         auto h1 = sigmoid(add(matmul(x, w1), b1));
         auto h2 = glu(matmul(h1, w2));
         return mse_loss(matmul(h2, w3), target);
       };
     }},
};

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(kOpCases),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Shapes, SwapAxesAndReshape) {
  auto x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = swap_axes(x, 0, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 2}));
  expect_vals(y, {1, 4, 2, 5, 3, 6});
  EXPECT_EQ(reshape(x, {6}).shape(), (Shape{6}));
  EXPECT_THROW(reshape(x, {4}), ShapeError);
}

TEST(Shapes, NodeMixMatchesDefinition) {
  auto m = Tensor::from_values({2, 2}, {0.5, 0.5, 0.0, 1.0});
  auto x = Tensor::from_values({1, 2, 2}, {1, 2, 3, 4});
  // out[i, c] = sum_j m[i, j] x[j, c]
  expect_vals(node_mix(m, x), {2, 3, 3, 4});
}

TEST(Accumulation, SplitBatchEqualsFullBatch) {
  std::mt19937_64 rng(31);
  auto w = random_tensor(rng, {3, 2});
  auto x = random_tensor(rng, {8, 3}, false);
  auto y = random_tensor(rng, {8, 2}, false);
  auto slice = [&](std::size_t lo, std::size_t hi, const Tensor& t) {
    std::size_t cols = t.dim(1);
    std::vector<double> v(t.values().begin() + lo * cols, t.values().begin() + hi * cols);
    return Tensor::from_values({hi - lo, cols}, std::move(v));
  };
  auto sse = [&](const Tensor& xs, const Tensor& ys) {
    auto d = sub(sigmoid(matmul(xs, w)), ys);
    return sum(mul(d, d));
  };
  backward(sse(x, y));
  std::vector<double> full(w.grad().begin(), w.grad().end());
  w.zero_grad();
  backward(sse(slice(0, 3, x), slice(0, 3, y)));
  backward(sse(slice(3, 8, x), slice(3, 8, y)));
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(w.grad()[i], full[i], 1e-10);
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputs) {
  auto run = [] {
    std::mt19937_64 rng(77);
    auto x = random_tensor(rng, {2, 6, 3, 2}, false);
    auto k = random_tensor(rng, {3, 2, 4}, false);
    auto b = random_tensor(rng, {4}, false);
    auto out = glu(conv1d_time(x, k, b));
    return std::vector<double>(out.values().begin(), out.values().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace stflow::ad
