#include <gtest/gtest.h>

#include <cmath>

#include "hcanet/autodiff.hpp"
#include "hcanet/branch_tape.hpp"
#include "test_support.hpp"

namespace hcanet::ad {
namespace {

using testing::random_tensor;

// Contracts an arbitrary output with fixed random weights so every element matters.
Var project(const Var& y, std::mt19937_64& rng) {
  return sum(mul(y, constant(random_tensor(rng, y.shape()))));
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

constexpr int kShapes = 20;
constexpr double kTol = 1e-5;

TEST(Backward, SumAndSquareGradients) {
  Var w = parameter(Tensor({3}, std::vector<double>{1, 2, 3}));
  backward(sum(w));
  EXPECT_EQ(w.grad(), Tensor({3}, 1.0));
  w.zero_grad();
  backward(sum(w * w));
  EXPECT_EQ(w.grad(), Tensor({3}, std::vector<double>{2, 4, 6}));
}

TEST(Backward, NonScalarLossIsRejected) {
  Var w = parameter(Tensor({3}, 1.0));
  EXPECT_THROW(backward(w * w), ArgumentError);
}

TEST(Backward, TwoPassesAccumulateExactlyTwice) {
  std::mt19937_64 rng(1);
  Var x = parameter(random_tensor(rng, {4, 3}));
  Var w = parameter(random_tensor(rng, {3, 2}));
  const Tensor r = random_tensor(rng, {4, 2});
  auto f = [&] { return sum(mul(tanh(matmul(x, w)), constant(r))); };
  backward(f());
  const Tensor once = w.grad();
  backward(f());
  for (std::size_t i = 0; i < once.numel(); ++i) EXPECT_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Backward, SharedSubexpressionSumsOverPaths) {
  Var x = parameter(Tensor::scalar(3.0));
  Var y = x * x;
  backward(y + y * x);  // d/dx (x² + x³) = 2x + 3x²
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0 + 27.0);
}

TEST(Backward, ConstantsReceiveGradientsButAreNotTrainable) {
  Var c = constant(Tensor({2}, std::vector<double>{1, -1}));
  Var w = parameter(Tensor({2}, std::vector<double>{2, 5}));
  backward(sum(c * w));
  EXPECT_EQ(c.grad(), Tensor({2}, std::vector<double>{2, 5}));
  EXPECT_FALSE(c.trainable());
  EXPECT_TRUE(w.trainable());
}

TEST(Backward, NoGradGuardRecordsNoGraph) {
  Var w = parameter(Tensor({2}, 1.0));
  Var y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = sum(w * w);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Backward, MutatingNonLeafIsRejected) {
  Var w = parameter(Tensor({2}, 1.0));
  Var y = w * w;
  EXPECT_THROW(y.mutable_value(), ArgumentError);
}

TEST(GradCheck, L1OfConvolution) {
  std::mt19937_64 rng(2);
  Var x = parameter(random_tensor(rng, {2, 5, 4}));
  Var w = parameter(random_tensor(rng, {3, 2, 3, 3}));
  Var b = parameter(random_tensor(rng, {3}));
  const Tensor target = random_tensor(rng, {3, 5, 4}, 5.0, 6.0);  // far from the |·| kink
  auto f = [&] { return mean(abs(sub(conv2d(x, w, b, 1, 1), constant(target)))); };
  EXPECT_LT(grad_check(f, std::vector<Var>{x, w, b}), kTol);
}

TEST(GradCheck, SoftmaxRowSumHasZeroGradient) {
  std::mt19937_64 rng(3);
  Var x = parameter(random_tensor(rng, {3, 4}));
  auto f = [&] { return sum(softmax_rows(x)); };
  // f is constant; a wide step keeps rounding noise small.
  GradCheckOptions wide;
  wide.step = 0.1;
  EXPECT_LT(grad_check(f, std::vector<Var>{x}, wide), 1e-6);
  backward(f());
  for (double g : x.grad().values()) EXPECT_LT(std::abs(g), 1e-15);
}

TEST(GradCheck, MatmulOnRandomShapes) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < kShapes; ++i) {
    const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
    Var a = parameter(random_tensor(rng, {m, k})), b = parameter(random_tensor(rng, {k, n}));
    const std::uint64_t s = rng();
    auto f = [&] {
      std::mt19937_64 r(s);
      return project(matmul(a, b), r);
    };
    EXPECT_LT(grad_check(f, std::vector<Var>{a, b}), kTol) << m << "x" << k << "x" << n;
  }
}

TEST(GradCheck, SoftmaxOnRandomShapes) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < kShapes; ++i) {
    Var a = parameter(random_tensor(rng, {pick(rng, 1, 4), pick(rng, 2, 6)}, -3.0, 3.0));
    const std::uint64_t s = rng();
    auto f = [&] {
      std::mt19937_64 r(s);
      return project(softmax_rows(a), r);
    };
    EXPECT_LT(grad_check(f, std::vector<Var>{a}), kTol);
  }
}

TEST(GradCheck, Conv2dOnRandomShapes) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < kShapes; ++i) {
    const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::size_t k = 2 * pick(rng, 0, 1) + 1;
    const int stride = static_cast<int>(pick(rng, 1, 2));
    Var x = parameter(random_tensor(rng, {cin, pick(rng, 3, 6), pick(rng, 3, 6)}));
    Var w = parameter(random_tensor(rng, {cout, cin, k, k}));
    Var b = parameter(random_tensor(rng, {cout}));
    const std::uint64_t s = rng();
    auto f = [&] {
      std::mt19937_64 r(s);
      return project(conv2d(x, w, b, stride, static_cast<int>(k / 2)), r);
    };
    EXPECT_LT(grad_check(f, std::vector<Var>{x, w, b}), kTol);
  }
}

TEST(GradCheck, GridSampleOnRandomShapes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  for (int i = 0; i < kShapes; ++i) {
    const std::size_t h = pick(rng, 3, 6), w = pick(rng, 3, 6), ho = pick(rng, 2, 4), wo = pick(rng, 2, 4);
    Var x = parameter(random_tensor(rng, {pick(rng, 1, 2), h, w}));
    // Sample points strictly inside bilinear cells (including ones hanging off the border)
    // so the central difference never straddles a cell edge.
    Tensor gx({ho, wo}), gy({ho, wo});
    for (std::size_t j = 0; j < ho * wo; ++j) {
      const double px = static_cast<double>(pick(rng, 0, w)) - 1.0 + frac(rng);
      const double py = static_cast<double>(pick(rng, 0, h)) - 1.0 + frac(rng);
      gx[j] = 2.0 * px / static_cast<double>(w - 1) - 1.0;
      gy[j] = 2.0 * py / static_cast<double>(h - 1) - 1.0;
    }
    Var vgx = parameter(gx), vgy = parameter(gy);
    const std::uint64_t s = rng();
    auto f = [&] {
      std::mt19937_64 r(s);
      return project(grid_sample(x, vgx, vgy), r);
    };
    EXPECT_LT(grad_check(f, std::vector<Var>{x, vgx, vgy}), kTol);
  }
}

TEST(GradCheck, ElementwiseOnRandomShapes) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < kShapes; ++i) {
    const Shape shape{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
    Var a = parameter(random_tensor(rng, shape)), b = parameter(random_tensor(rng, shape));
    const std::uint64_t s = rng();
    auto f = [&] {
      std::mt19937_64 r(s);
      return project(mul(add(a, b), sub(a, scale(b, 0.5))), r);
    };
    EXPECT_LT(grad_check(f, std::vector<Var>{a, b}), kTol);
  }
}

TEST(GradCheck, ReductionsOnRandomShapes) {
  std::mt19937_64 rng(9);
  std::bernoulli_distribution coin;
  for (int i = 0; i < kShapes; ++i) {
    Tensor v = random_tensor(rng, {pick(rng, 1, 3), pick(rng, 1, 5)}, 0.1, 1.0);
    for (double& e : v.values()) if (coin(rng)) e = -e;  // keep |·| away from its kink
    Var a = parameter(v);
    auto f = [&] { return add(add(scale(sum(a), 0.3), mean(mul(a, a))), abs_sum(a)); };
    EXPECT_LT(grad_check(f, std::vector<Var>{a}), kTol);
  }
}

TEST(GradCheck, ConcatAndReshapeOnRandomShapes) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < kShapes; ++i) {
    const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    Var a = parameter(random_tensor(rng, {pick(rng, 1, 3), h, w}));
    Var b = parameter(random_tensor(rng, {pick(rng, 1, 3), h, w}));
    const std::uint64_t s = rng();
    auto f = [&] {
      std::mt19937_64 r(s);
      Var c = concat_channels({a, b});
      Var flat = reshape(c, {c.shape()[0], h * w});
      return project(permute(flat, {1, 0}), r);
    };
    EXPECT_LT(grad_check(f, std::vector<Var>{a, b}), kTol);
  }
}

TEST(BranchTape, ReplayPinsActivationSides) {
  Var x = parameter(Tensor({2}, std::vector<double>{0.5, -0.5}));
  BranchTape tape;
  {
    BranchTape::Scope record(tape, BranchTape::Mode::kRecord);
    relu(x);
  }
  EXPECT_EQ(tape.size(), 2u);
  x.mutable_value() = Tensor({2}, std::vector<double>{-1.0, 2.0});
  {
    BranchTape::Scope replay(tape, BranchTape::Mode::kReplay);
    const Tensor y = relu(x).value();
    EXPECT_EQ(y[0], -1.0);  // still on the identity side
    EXPECT_EQ(y[1], 0.0);   // still on the zero side
    EXPECT_THROW(relu(x), ArgumentError);  // asks for more choices than recorded
  }
  EXPECT_EQ(BranchTape::active(), nullptr);
  EXPECT_EQ(relu(x).value()[1], 2.0);
}

TEST(GradCheck, PinnedBranchesSurviveAKinkInsideTheStep) {
  // |x| with x closer to 0 than the step: the plain central difference is biased.
  Var x = parameter(Tensor({1}, std::vector<double>{3e-6}));
  auto f = [&] { return sum(abs(x)); };
  EXPECT_GT(grad_check(f, std::vector<Var>{x}), 0.1);
  GradCheckOptions pinned;
  pinned.pin_branches = true;
  EXPECT_LT(grad_check(f, std::vector<Var>{x}, pinned), 1e-9);
}

TEST(GradCheck, RichardsonCancelsTruncation) {
  Var x = parameter(Tensor({1}, std::vector<double>{0.7}));
  auto f = [&] { return sum(tanh(scale(x, 3.0))); };
  GradCheckOptions coarse;
  coarse.step = 1e-2;
  const double plain = grad_check(f, std::vector<Var>{x}, coarse);
  coarse.richardson = true;
  EXPECT_LT(grad_check(f, std::vector<Var>{x}, coarse), plain / 100.0);
}

}  // namespace
}  // namespace hcanet::ad
