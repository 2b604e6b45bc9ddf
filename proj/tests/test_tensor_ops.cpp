#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_support.hpp"

using namespace snapsci;
using snapsci::testing::finite_difference_check;
using snapsci::testing::random_tensor;

namespace {

Tensor<double> leaf(Tensor<double> t) {
  t.set_requires_grad();
  return t;
}

// Six nested loops straight from the definition.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                           std::size_t stride, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), k = w.dim(2);
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  Tensor<double> y(Shape{N, Co, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = b.data()[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < k; ++p)
              for (std::size_t q = 0; q < k; ++q) {
                const long hi = static_cast<long>(i * stride + p) - static_cast<long>(pad);
                const long wi = static_cast<long>(j * stride + q) - static_cast<long>(pad);
                if (hi >= 0 && wi >= 0 && hi < static_cast<long>(H) && wi < static_cast<long>(W))
                  acc += w(o, c, p, q) * x(n, c, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi));
              }
          y(n, o, i, j) = acc;
        }
  return y;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<double>(Shape{2, 3}, std::vector<double>(5)), DimensionError);
  Tensor<double> t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(shape_numel(t.shape()), t.numel());
}

TEST(Tensor, CopiesAliasAndCloneDoesNot) {
  Tensor<double> a(Shape{3}, 1.0);
  Tensor<double> b = a;
  Tensor<double> c = a.clone();
  b.data()[0] = 7.0;
  EXPECT_EQ(a.data()[0], 7.0);
  EXPECT_EQ(c.data()[0], 1.0);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.same_storage(c));
}

TEST(Tensor, GradHasDataShape) {
  std::mt19937_64 rng(1);
  auto x = leaf(random_tensor({2, 3, 4, 4}, rng));
  Tape<double> tape;
  {
    TapeScope<double> s(tape);
    tape.backward(sum(relu(x)));
  }
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad().size(), x.numel());
}

TEST(Conv2d, OnesKernelPaddingArithmetic) {
  Tensor<double> x(Shape{1, 1, 3, 3}, 1.0), w(Shape{1, 1, 3, 3}, 1.0), b(Shape{1}, 0.0);
  const auto y = conv2d(x, w, b, 1, 1);
  EXPECT_EQ(y(0, 0, 1, 1), 9.0);
  EXPECT_EQ(y(0, 0, 0, 0), 4.0);
  EXPECT_EQ(y(0, 0, 0, 2), 4.0);
  EXPECT_EQ(y(0, 0, 2, 0), 4.0);
  EXPECT_EQ(y(0, 0, 2, 2), 4.0);
  EXPECT_EQ(y(0, 0, 0, 1), 6.0);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor({1, 1, 5, 6}, rng);
  Tensor<double> w(Shape{1, 1, 3, 3}, 0.0), b(Shape{1}, 0.0);
  w(0, 0, 1, 1) = 1.0;
  const auto y = conv2d(x, w, b, 1, 1);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({1, 2, 5, 5}, rng);
  const auto w = random_tensor({3, 2, 3, 3}, rng);
  const auto b = random_tensor({3}, rng);
  const auto y = conv2d(x, w, b, 1, 1);
  const auto ref = conv_oracle(x, w, b, 1, 1);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y.data()[i], ref.data()[i], 1e-12);
}

TEST(Conv2d, MatchesLoopOracleAcrossStridesAndPadding) {
  std::mt19937_64 rng(4);
  for (std::size_t stride : {1u, 2u, 3u})
    for (std::size_t pad : {0u, 1u, 2u})
      for (std::size_t k : {1u, 3u, 5u}) {
        if (pad > k / 2 + 1) continue;
        const auto x = random_tensor({2, 4, 8, 8}, rng);
        const auto w = random_tensor({3, 4, k, k}, rng);
        const auto b = random_tensor({3}, rng);
        const auto y = conv2d(x, w, b, stride, pad);
        const auto ref = conv_oracle(x, w, b, stride, pad);
        ASSERT_EQ(y.shape(), ref.shape()) << "stride " << stride << " pad " << pad << " k " << k;
        double worst = 0.0;
        for (std::size_t i = 0; i < y.numel(); ++i) worst = std::max(worst, std::abs(y.data()[i] - ref.data()[i]));
        EXPECT_LT(worst, 1e-12) << "stride " << stride << " pad " << pad << " k " << k;
      }
}

TEST(Conv2d, Errors) {
  Tensor<double> x(Shape{1, 2, 4, 4}), w(Shape{1, 3, 3, 3}), b(Shape{1});
  EXPECT_THROW(conv2d(x, w, b, 1, 1), DimensionError);
  Tensor<double> w_even(Shape{1, 2, 2, 2});
  EXPECT_THROW(conv2d(x, w_even, b, 1, 1), DimensionError);
  Tensor<double> w_ok(Shape{1, 2, 3, 3});
  EXPECT_THROW(conv2d(x, w_ok, b, 0, 1), ContractError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (std::size_t stride : {1u, 2u}) {
    auto x = leaf(random_tensor({2, 3, 6, 6}, rng));
    auto w = leaf(random_tensor({4, 3, 3, 3}, rng));
    auto b = leaf(random_tensor({4}, rng));
    const auto t = random_tensor({2, 4, 6 / stride, 6 / stride}, rng);
    auto loss = [&] { return mse_loss(conv2d(x, w, b, stride, 1), t); };
    const auto r = finite_difference_check(loss, {{"x", x}, {"w", w}, {"b", b}});
    EXPECT_LT(r.worst, 1e-6) << r.where << " stride " << stride;
  }
}

TEST(Relu, ValuesAndZeroSubgradient) {
  Tensor<double> x = leaf(Tensor<double>(Shape{3}, std::vector<double>{-1.0, 0.0, 2.0}));
  Tape<double> tape;
  {
    TapeScope<double> s(tape);
    const auto y = relu(x);
    EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.0, 2.0}));
    tape.backward(sum(y));
  }
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Relu, AllNegativeGivesZeroGradient) {
  auto x = leaf(Tensor<double>(Shape{4}, -0.5));
  Tape<double> tape;
  {
    TapeScope<double> s(tape);
    const auto y = relu(x);
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
    tape.backward(sum(y));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Relu, GradientAwayFromZero) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({2, 2, 3, 3}, rng);
  for (auto& v : x.data())
    if (std::abs(v) < 0.05) v = 0.3;
  x.set_requires_grad();
  const auto t = random_tensor({2, 2, 3, 3}, rng);
  const auto r = finite_difference_check([&] { return mse_loss(relu(x), t); }, {{"x", x}});
  EXPECT_LT(r.worst, 1e-5) << r.where;
}

TEST(Sigmoid, ValuesSaturationGradient) {
  Tensor<double> x(Shape{3}, std::vector<double>{0.0, 800.0, -800.0});
  const auto y = sigmoid(x);
  EXPECT_EQ(y.data()[0], 0.5);
  EXPECT_FALSE(std::isnan(y.data()[1]));
  EXPECT_FALSE(std::isnan(y.data()[2]));
  EXPECT_NEAR(y.data()[1], 1.0, 1e-15);
  EXPECT_NEAR(y.data()[2], 0.0, 1e-15);

  std::mt19937_64 rng(7);
  auto z = leaf(random_tensor({3, 5}, rng, -3.0, 3.0));
  const auto t = random_tensor({3, 5}, rng);
  const auto r = finite_difference_check([&] { return mse_loss(sigmoid(z), t); }, {{"z", z}});
  EXPECT_LT(r.worst, 1e-6) << r.where;
}

TEST(GlobalAvgPool, ValuesAndGradient) {
  Tensor<double> x(Shape{1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 5, 5, 5});
  const auto y = global_avg_pool(x);
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  EXPECT_EQ(y.data()[0], 2.5);
  EXPECT_EQ(y.data()[1], 5.0);

  std::mt19937_64 rng(8);
  auto z = leaf(random_tensor({2, 3, 4, 5}, rng));
  Tape<double> tape;
  {
    TapeScope<double> s(tape);
    tape.backward(sum(global_avg_pool(z)));
  }
  for (double g : z.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 20.0);
  const auto t = random_tensor({2, 3}, rng);
  const auto r = finite_difference_check([&] { return mse_loss(global_avg_pool(z), t); }, {{"z", z}});
  EXPECT_LT(r.worst, 1e-6) << r.where;
}

TEST(PixelShuffle, DefinitionAndIdentity) {
  Tensor<double> x(Shape{1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  const auto y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 3, 4}));

  std::mt19937_64 rng(9);
  const auto z = random_tensor({2, 3, 4, 5}, rng);
  EXPECT_EQ(pixel_shuffle(z, 1).values(), z.values());
  EXPECT_THROW(pixel_shuffle(Tensor<double>(Shape{1, 3, 2, 2}), 2), DimensionError);
}

TEST(PixelShuffle, PermutationAndInverse) {
  std::mt19937_64 rng(10);
  for (std::size_t r : {2u, 3u}) {
    const auto x = random_tensor({2, 2 * r * r, 3, 4}, rng);
    const auto y = pixel_shuffle(x, r);
    EXPECT_EQ(y.shape(), (Shape{2, 2, 3 * r, 4 * r}));
    auto a = x.values(), b = y.values();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    EXPECT_EQ(pixel_unshuffle(y, r).values(), x.values());
  }
}

TEST(PixelShuffle, Gradient) {
  std::mt19937_64 rng(11);
  auto x = leaf(random_tensor({1, 8, 2, 3}, rng));
  const auto t = random_tensor({1, 2, 4, 6}, rng);
  const auto r = finite_difference_check([&] { return mse_loss(pixel_shuffle(x, 2), t); }, {{"x", x}});
  EXPECT_LT(r.worst, 1e-6) << r.where;
}

TEST(Binary, AddZeroAndChannelBroadcast) {
  std::mt19937_64 rng(12);
  const auto x = random_tensor({2, 3, 2, 2}, rng);
  EXPECT_EQ(add(x, Tensor<double>(x.shape(), 0.0)).values(), x.values());

  Tensor<double> a(Shape{2, 3}, 1.0);
  a.data()[1] = 2.0;  // sample 0, channel 1
  const auto y = mul(x, a);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t w = 0; w < 2; ++w) {
          const double f = (n == 0 && c == 1) ? 2.0 : 1.0;
          EXPECT_EQ(y(n, c, h, w), f * x(n, c, h, w));
        }
  EXPECT_THROW(add(x, Tensor<double>(Shape{2, 4})), DimensionError);
  EXPECT_THROW(add(x, Tensor<double>(Shape{2, 3, 2, 3})), DimensionError);
}

TEST(Binary, BroadcastGradientsSumOverAxes) {
  std::mt19937_64 rng(13);
  auto x = leaf(random_tensor({2, 3, 3, 2}, rng));
  auto a = leaf(random_tensor({2, 3, 1, 1}, rng));
  auto b = leaf(random_tensor({2, 3}, rng));
  const auto t = random_tensor({2, 3, 3, 2}, rng);
  auto loss = [&] { return mse_loss(add(mul(x, a), sub(x, b)), t); };
  const auto r = finite_difference_check(loss, {{"x", x}, {"a", a}, {"b", b}});
  EXPECT_LT(r.worst, 1e-6) << r.where;
}

TEST(Losses, ValuesAndGradients) {
  Tensor<double> p(Shape{1, 1, 5, 5}, 0.6), t(Shape{1, 1, 5, 5}, 0.5);
  EXPECT_NEAR(mse_loss(p, t).item(), 0.01, 1e-15);
  EXPECT_NEAR(l2_norm_loss(p, t).item(), 0.1 * 5.0, 1e-12);
  EXPECT_EQ(mse_loss(t, t).item(), 0.0);
  EXPECT_NEAR(l2_norm_loss(t, t).item(), 0.0, 1e-6);
  EXPECT_THROW(mse_loss(p, Tensor<double>(Shape{1, 1, 5, 4})), DimensionError);
  EXPECT_THROW(l2_norm_loss(p, Tensor<double>(Shape{1, 1, 5, 4})), DimensionError);

  std::mt19937_64 rng(14);
  auto x = leaf(random_tensor({2, 2, 3, 3}, rng));
  const auto y = random_tensor({2, 2, 3, 3}, rng);
  EXPECT_LT(finite_difference_check([&] { return mse_loss(x, y); }, {{"x", x}}).worst, 1e-6);
  EXPECT_LT(finite_difference_check([&] { return l2_norm_loss(x, y); }, {{"x", x}}).worst, 1e-6);
  EXPECT_LT(finite_difference_check([&] { return batch_l2_norm_loss(x, y); }, {{"x", x}}).worst, 1e-6);
}

TEST(Backward, SumAndSquare) {
  std::mt19937_64 rng(15);
  auto x = leaf(random_tensor({3, 4}, rng));
  {
    Tape<double> tape;
    TapeScope<double> s(tape);
    tape.backward(sum(x));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  {
    Tape<double> tape;
    TapeScope<double> s(tape);
    tape.backward(sum(mul(x, x)));
  }
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.data()[i]);
}

TEST(Backward, Errors) {
  auto x = leaf(Tensor<double>(Shape{2}, 1.0));
  Tape<double> tape;
  TapeScope<double> s(tape);
  const auto y = relu(x);
  EXPECT_THROW(tape.backward(y), ContractError);
  Tensor<double> stranger(Shape{1}, 0.0);
  EXPECT_THROW(tape.backward(stranger), ContractError);
}

TEST(Tape, RecordsInTopologicalOrderAndReplaysInReverse) {
  std::mt19937_64 rng(16);
  auto x = leaf(random_tensor({1, 2, 3, 3}, rng));
  auto w = leaf(random_tensor({2, 2, 3, 3}, rng));
  auto b = leaf(random_tensor({2}, rng));
  Tape<double> tape;
  TapeScope<double> s(tape);
  const auto loss = sum(sigmoid(relu(conv2d(x, w, b, 1, 1))));
  const auto& e = tape.entries();
  // every input is a leaf or the output of an earlier entry
  for (std::size_t i = 0; i < e.size(); ++i)
    for (const auto& in : e[i].inputs) {
      const bool is_leaf = in.same_storage(x) || in.same_storage(w) || in.same_storage(b);
      bool earlier = false;
      for (std::size_t j = 0; j < i; ++j) earlier = earlier || e[j].output.same_storage(in);
      EXPECT_TRUE(is_leaf || earlier) << "entry " << i << " (" << e[i].op << ")";
    }
  std::vector<std::string> order;
  Tape<double> probe;
  for (const auto& entry : e) {
    probe.record(entry.op, entry.inputs, entry.output, [&order, op = entry.op] { order.push_back(op); });
  }
  probe.backward(loss);
  std::vector<std::string> expected;
  for (auto it = e.rbegin(); it != e.rend(); ++it) expected.push_back(it->op);
  EXPECT_EQ(order, expected);
}

TEST(Tape, NoGradScopeSkipsRecording) {
  auto x = leaf(Tensor<double>(Shape{3}, 1.0));
  Tape<double> tape;
  TapeScope<double> s(tape);
  {
    NoGradScope<double> off;
    (void)relu(x);
  }
  EXPECT_EQ(tape.size(), 0u);
  (void)relu(x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Ops, DeterministicAcrossRuns) {
  auto run = [] {
    std::mt19937_64 rng(17);
    const auto x = random_tensor({2, 3, 6, 6}, rng);
    const auto w = random_tensor({4, 3, 3, 3}, rng);
    const auto b = random_tensor({4}, rng);
    return pixel_shuffle(sigmoid(conv2d(x, w, b, 1, 1)), 2).values();
  };
  EXPECT_EQ(run(), run());
}

TEST(Ops, FiniteOutputsOnRandomInputs) {
  std::mt19937_64 rng(18);
  const auto x = random_tensor({2, 4, 5, 5}, rng, -50.0, 50.0);
  for (const auto& y : {relu(x), sigmoid(x), global_avg_pool(x), pixel_shuffle(x, 2)})
    for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
}
