// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "mflow/autodiff.hpp"
#include "mflow/rng.hpp"
#include "mflow/tensor.hpp"
#include "test_util.hpp"

namespace mflow {
namespace {

using testing::AllClose;

// ---- tensors -----------------------------------------------------------

TEST(Tensor, AddIsComponentwise) {
  EXPECT_EQ(Tensor::from({1, 2}) + Tensor::from({3, 4}), Tensor::from({4, 6}));
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  try {
    (void)(Tensor::zeros({2, 3}) + Tensor::zeros({3, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
}

TEST(Tensor, ConstructorRejectsWrongDataLength) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, IdentityMatmulReturnsOperand) {
  Rng rng(5);
  const Tensor a = rng.normal_tensor({3, 3});
  EXPECT_EQ(matmul(Tensor::eye(3), a), a);
}

TEST(Tensor, MatmulMatchesNaiveTripleLoop) {
  Rng rng(9);
  const Tensor a = rng.normal_tensor({37, 19});
  const Tensor b = rng.normal_tensor({19, 23});
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 37; ++i)
    for (std::size_t j = 0; j < 23; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 19; ++k) acc += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), acc, 1e-12);
    }
}

// Trunk-sized shapes, where optimized kernels switch to blocked code paths.
TEST(Tensor, KernelsMatchNaiveLoopsAtTrunkShapes) {
  Rng rng(10);
  const std::size_t shapes[][3] = {{256, 1152, 128}, {256, 128, 1024}, {33, 65, 17}};
  for (const auto& sh : shapes) {
    const std::size_t m = sh[0], k = sh[1], n = sh[2];
    const Tensor a = rng.normal_tensor({m, k});
    const Tensor b = rng.normal_tensor({k, n});
    const Tensor g = rng.normal_tensor({m, n});
    Tensor ab({m, n}), gbt({m, k}), atg({k, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          ab.at(i, j) += a.at(i, p) * b.at(p, j);
          gbt.at(i, p) += g.at(i, j) * b.at(p, j);
          atg.at(p, j) += a.at(i, p) * g.at(i, j);
        }
    Tensor out({m, n}), nt = Tensor::ones({m, k}), tn = Tensor::ones({k, n});
    kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
    kernels::matmul_nt_acc(g.data(), b.data(), nt.data(), m, k, n);
    kernels::matmul_tn_acc(a.data(), g.data(), tn.data(), m, k, n);
    EXPECT_TRUE(AllClose(out, ab, 0.0, 1e-10)) << m << "x" << k << "x" << n;
    EXPECT_TRUE(AllClose(nt, gbt + Tensor::ones({m, k}), 0.0, 1e-10)) << m << "x" << k << "x" << n;
    EXPECT_TRUE(AllClose(tn, atg + Tensor::ones({k, n}), 0.0, 1e-10)) << m << "x" << k << "x" << n;
  }
}

TEST(Tensor, MeanOfSeededNormalDrawsIsNearZero) {
  Rng rng(2024);
  const Tensor x = rng.normal_tensor({1000});
  const double m = mean(x);
  EXPECT_LT(std::abs(m), 0.1);
  // Same seed, same value.
  Rng again(2024);
  EXPECT_EQ(mean(again.normal_tensor({1000})), m);
}

TEST(Tensor, RngStateRoundTripResumesStream) {
  Rng a(77);
  (void)a.normal();
  const std::string state = a.state();
  const double next = a.normal();
  Rng b(0);
  b.restore(state);
  EXPECT_EQ(b.normal(), next);
}

// ---- forward mode ------------------------------------------------------

TEST(Jvp, IdentityPassesTangentThrough) {
  const Tensor x = Tensor::from({1.5, -2.0, 0.25});
  const Tensor v = Tensor::from({0.3, 7.0, -1.0});
  const auto r = jvp([](Graph&, std::span<const Var> in) { return in[0]; }, std::vector{x},
                     std::vector{v});
  EXPECT_EQ(r.value, x);
  EXPECT_EQ(r.tangent, v);
}

TEST(Jvp, SquareAtThree) {
  const auto r = jvp([](Graph&, std::span<const Var> in) { return square(in[0]); },
                     std::vector{Tensor::from({3.0})}, std::vector{Tensor::from({1.0})});
  EXPECT_EQ(r.value[0], 9.0);
  EXPECT_EQ(r.tangent[0], 6.0);
}

TEST(Jvp, ZeroTangentStaysZero) {
  Rng rng(1);
  const Tensor w = rng.normal_tensor({3, 4});
  const auto r = jvp(
      [&](Graph& g, std::span<const Var> in) {
        const Var h = silu(matmul(in[0], g.constant(w)));
        return sqrt(add_scalar(square(mul(sin(h), cos(h))), 1.0));
      },
      std::vector{rng.normal_tensor({2, 3})}, std::vector{Tensor::zeros({2, 3})});
  EXPECT_EQ(r.tangent, Tensor::zeros({2, 4}));
}

TEST(Jvp, NonDifferentiableOpRaisesAtTraceTime) {
  EXPECT_THROW(jvp([](Graph&, std::span<const Var> in) { return floor(in[0]); },
                   std::vector{Tensor::from({1.2})}, std::vector{Tensor::from({1.0})}),
               NonDifferentiableError);
}

// Two-layer net with every op the engine offers on the hot path.
struct TwoLayer {
  Tensor w1, b1, w2, b2;

  explicit TwoLayer(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out)
      : w1(rng.normal_tensor({in, hidden})),
        b1(rng.normal_tensor({hidden})),
        w2(rng.normal_tensor({hidden, out})),
        b2(rng.normal_tensor({out})) {}

  Var operator()(Graph& g, const Var& x) const {
    const Var h = silu(add_bias(matmul(x, g.constant(w1)), g.constant(b1)));
    return add_bias(matmul(h, g.constant(w2)), g.constant(b2));
  }

  Tensor eval(const Tensor& x) const {
    Graph g;
    return (*this)(g, g.constant(x)).value();
  }
};

TEST(Jvp, RandomTwoLayerNetMatchesCentralDifference) {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const TwoLayer net(rng, 3, 8, 2);
    const Tensor x = rng.normal_tensor({4, 3});
    const Tensor v = rng.normal_tensor({4, 3});
    const auto r = jvp([&](Graph& g, std::span<const Var> in) { return net(g, in[0]); },
                       std::vector{x}, std::vector{v});
    const double h = 1e-5;
    const Tensor fd = (1.0 / (2.0 * h)) * (net.eval(axpy(x, h, v)) - net.eval(axpy(x, -h, v)));
    EXPECT_TRUE(AllClose(r.tangent, fd, 1e-4, 1e-8));
  }
}

TEST(Jvp, LinearInTangent) {
  Rng rng(3);
  const TwoLayer net(rng, 3, 6, 3);
  const Tensor x = rng.normal_tensor({5, 3});
  const Tensor v1 = rng.normal_tensor({5, 3});
  const Tensor v2 = rng.normal_tensor({5, 3});
  const double a = 0.7, b = -1.3;
  const TracedFn f = [&](Graph& g, std::span<const Var> in) { return net(g, in[0]); };
  const Tensor t1 = jvp(f, std::vector{x}, std::vector{v1}).tangent;
  const Tensor t2 = jvp(f, std::vector{x}, std::vector{v2}).tangent;
  const Tensor t12 = jvp(f, std::vector{x}, std::vector{a * v1 + b * v2}).tangent;
  EXPECT_TRUE(AllClose(t12, a * t1 + b * t2, 1e-9, 1e-12));
}

// ---- reverse mode ------------------------------------------------------

TEST(Backward, SumGivesOnes) {
  const Tensor x = Tensor::from({1.0, -2.0, 3.0});
  const auto g = gradient([](Graph&, std::span<const Var> in) { return sum(in[0]); }, std::vector{x});
  EXPECT_EQ(g[0], Tensor::ones({3}));
}

TEST(Backward, SquaredNormGivesTwoX) {
  const Tensor x = Tensor::from({1.0, -2.0, 3.5});
  const auto g = gradient([](Graph&, std::span<const Var> in) { return sum(square(in[0])); },
                          std::vector{x});
  EXPECT_EQ(g[0], 2.0 * x);
}

TEST(Backward, RandomMlpLossMatchesCentralDifference) {
  Rng rng(8);
  const Tensor x = rng.normal_tensor({6, 3});
  const Tensor target = rng.normal_tensor({6, 2});
  const Tensor w1 = rng.normal_tensor({3, 5}), b1 = rng.normal_tensor({5});
  const Tensor w2 = rng.normal_tensor({5, 2}), b2 = rng.normal_tensor({2});
  const TracedFn loss = [&](Graph& g, std::span<const Var> p) {
    const Var h = silu(add_bias(matmul(g.constant(x), p[0]), p[1]));
    const Var y = add_bias(matmul(h, p[2]), p[3]);
    return mean(row_sum(square(sub(y, g.constant(target)))));
  };
  const std::vector<Tensor> params = {w1, b1, w2, b2};
  const auto grads = gradient(loss, params);
  const double h = 1e-5;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      auto eval = [&](double d) {
        std::vector<Tensor> q = params;
        q[p][i] += d;
        Graph g;
        std::vector<Var> vars;
        for (const Tensor& t : q) vars.push_back(g.constant(t));
        return loss(g, vars).value().item();
      };
      const double fd = testing::central_difference(eval, h);
      EXPECT_NEAR(grads[p][i], fd, 1e-8 + 1e-4 * std::abs(fd)) << "param " << p << " entry " << i;
    }
  }
}

TEST(Backward, JvpAndGradientAgreeForScalarFunctions) {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const TwoLayer net(rng, 4, 7, 3);
    const Tensor x = rng.normal_tensor({3, 4});
    const Tensor v = rng.normal_tensor({3, 4});
    const TracedFn f = [&](Graph& g, std::span<const Var> in) { return sum(square(net(g, in[0]))); };
    const double directional = dot(gradient(f, std::vector{x})[0], v);
    const double tangent = jvp(f, std::vector{x}, std::vector{v}).tangent.item();
    EXPECT_NEAR(tangent, directional, 1e-6 * std::abs(directional));
  }
}

TEST(Backward, BroadcastTrailingSingleton) {
  // x [3,2] * c [3,1]: gradient of c sums over the trailing axis.
  const Tensor x = Tensor({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor c = Tensor({3, 1}, {2, -1, 0.5});
  const auto g = gradient([](Graph&, std::span<const Var> in) { return sum(mul(in[0], in[1])); },
                          std::vector{x, c});
  EXPECT_EQ(g[0], Tensor({3, 2}, {2, 2, -1, -1, 0.5, 0.5}));
  EXPECT_EQ(g[1], Tensor({3, 1}, {3, 7, 11}));
}

TEST(Backward, NonTrailingBroadcastIsRejected) {
  Graph g;
  const Var a = g.constant(Tensor::zeros({2, 3}));
  const Var b = g.constant(Tensor::zeros({1, 3}));
  EXPECT_THROW(add(a, b), ShapeError);
}

TEST(Backward, ConcatRoutesGradientsToParts) {
  const Tensor a = Tensor({2, 1}, {1, 2});
  const Tensor b = Tensor({2, 2}, {3, 4, 5, 6});
  const Tensor w = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto g = gradient(
      [&](Graph& gr, std::span<const Var> in) { return sum(mul(concat({in[0], in[1]}, 1), gr.constant(w))); },
      std::vector{a, b});
  EXPECT_EQ(g[0], Tensor({2, 1}, {1, 4}));
  EXPECT_EQ(g[1], Tensor({2, 2}, {2, 3, 5, 6}));
}

TEST(Backward, DetachedLossGivesZeroGradient) {
  Graph g;
  const Tensor x = Tensor::from({1.0, 2.0});
  const Var p = g.parameter(x);
  const Var c = g.constant(Tensor::from({3.0, 4.0}));
  g.backward(sum(square(c)));
  EXPECT_EQ(g.grad(p), Tensor::zeros({2}));
}

TEST(Backward, RequiresScalarLoss) {
  Graph g;
  const Tensor x = Tensor::from({1.0, 2.0});
  EXPECT_THROW(g.backward(g.parameter(x)), ShapeError);
}

// ---- stop-gradient -----------------------------------------------------

TEST(StopGradient, ValueUnchanged) {
  Graph g;
  const Tensor x = Tensor::from({1.0, -4.0});
  EXPECT_EQ(stop_gradient(g.constant(x)).value(), x);
}

TEST(StopGradient, ProductRuleWithFrozenFactor) {
  const Tensor x = Tensor::from({1.5, -2.0, 0.5});
  const auto g = gradient(
      [](Graph&, std::span<const Var> in) { return sum(mul(stop_gradient(in[0]), in[0])); },
      std::vector{x});
  EXPECT_EQ(g[0], x);
}

TEST(StopGradient, TangentIsZero) {
  const auto r = jvp([](Graph&, std::span<const Var> in) { return stop_gradient(square(in[0])); },
                     std::vector{Tensor::from({2.0, 3.0})}, std::vector{Tensor::from({1.0, 1.0})});
  EXPECT_EQ(r.tangent, Tensor::zeros({2}));
}

TEST(StopGradient, IsAProjection) {
  const Tensor x = Tensor::from({0.3, -0.7});
  const Tensor v = Tensor::from({1.0, 2.0});
  const TracedFn once = [](Graph&, std::span<const Var> in) { return sum(mul(stop_gradient(in[0]), in[0])); };
  const TracedFn twice = [](Graph&, std::span<const Var> in) {
    return sum(mul(stop_gradient(stop_gradient(in[0])), in[0]));
  };
  EXPECT_EQ(gradient(once, std::vector{x})[0], gradient(twice, std::vector{x})[0]);
  const auto j1 = jvp(once, std::vector{x}, std::vector{v});
  const auto j2 = jvp(twice, std::vector{x}, std::vector{v});
  EXPECT_EQ(j1.value, j2.value);
  EXPECT_EQ(j1.tangent, j2.tangent);
}

TEST(Determinism, SameSeedSameOpsBitIdentical) {
  auto run = [] {
    Rng rng(99);
    const TwoLayer net(rng, 3, 9, 2);
    const Tensor x = rng.normal_tensor({8, 3});
    const Tensor v = rng.normal_tensor({8, 3});
    return jvp([&](Graph& g, std::span<const Var> in) { return net(g, in[0]); }, std::vector{x},
               std::vector{v});
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.tangent, b.tangent);
}

TEST(Embedding, UnknownIdThrows) {
  Graph g;
  const Var table = g.constant(Tensor::zeros({3, 2}));
  const std::vector<int> ids = {0, 3};
  EXPECT_THROW(embedding(table, ids), std::out_of_range);
}

TEST(Embedding, GradientScattersRows) {
  const Tensor table = Tensor({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::vector<int> ids = {2, 0, 2};
  const auto g = gradient([&](Graph&, std::span<const Var> in) { return sum(embedding(in[0], ids)); },
                          std::vector{table});
  EXPECT_EQ(g[0], Tensor({3, 2}, {1, 1, 0, 0, 2, 2}));
}

}  // namespace
}  // namespace mflow
