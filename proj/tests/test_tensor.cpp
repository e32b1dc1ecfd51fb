#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "hcanet/tensor.hpp"
#include "test_support.hpp"

namespace hcanet {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      c.at(i, j) = s;
    }
  return c;
}

Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const long cin = static_cast<long>(x.dim(0)), h = static_cast<long>(x.dim(1)),
             wd = static_cast<long>(x.dim(2));
  const long cout = static_cast<long>(w.dim(0)), k = static_cast<long>(w.dim(2));
  const long ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor out({static_cast<std::size_t>(cout), static_cast<std::size_t>(ho),
              static_cast<std::size_t>(wo)});
  for (long o = 0; o < cout; ++o)
    for (long y = 0; y < ho; ++y)
      for (long xo = 0; xo < wo; ++xo) {
        double s = b[static_cast<std::size_t>(o)];
        for (long c = 0; c < cin; ++c)
          for (long i = 0; i < k; ++i)
            for (long j = 0; j < k; ++j) {
              const long yy = y * stride - pad + i, xx = xo * stride - pad + j;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              s += w[static_cast<std::size_t>(((o * cin + c) * k + i) * k + j)] *
                   x.at(static_cast<std::size_t>(c), static_cast<std::size_t>(yy),
                        static_cast<std::size_t>(xx));
            }
        out.at(static_cast<std::size_t>(o), static_cast<std::size_t>(y),
               static_cast<std::size_t>(xo)) = s;
      }
  return out;
}

TEST(Tensor, ConstructionValidatesShape) {
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_TRUE(t.all_finite());
}

TEST(Tensor, NonFiniteIsDetected) {
  Tensor t({2}, 0.0);
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Matmul, IdentityAndHandArithmetic) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Tensor::matrix({{1, 0}, {0, 1}}), m), m);
  EXPECT_EQ(matmul(m, Tensor::matrix({{5, 6}, {7, 8}})), Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor(rng, {7, 5}), b = random_tensor(rng, {5, 3});
    EXPECT_LT(max_abs_diff(matmul(a, b), matmul_oracle(a, b)), 1e-12);
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor(rng, {4, 6}), b = random_tensor(rng, {5, 6});
  EXPECT_LT(max_abs_diff(matmul_nt(a, b), matmul_oracle(a, permute(b, {1, 0}))), 1e-12);
  const Tensor c = random_tensor(rng, {4, 3});
  EXPECT_LT(max_abs_diff(matmul_tn(a, c), matmul_oracle(permute(a, {1, 0}), c)), 1e-12);
}

TEST(Matmul, InnerMismatchNamesShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TEST(Softmax, AnalyticRows) {
  const Tensor y = softmax_rows(Tensor::matrix({{0, 0, 0, 0}}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  const Tensor z = softmax_rows(Tensor::matrix({{0, std::log(2.0)}}));
  EXPECT_NEAR(z[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(z[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor y = softmax_rows(Tensor::matrix({{1000, 1001}}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(y[0], 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(y[1], e / (1.0 + e), 1e-15);
}

TEST(Softmax, RowsSumToOneAndAreShiftInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_tensor(rng, {4, 7}, -10.0, 10.0);
    const Tensor y = softmax_rows(a);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GE(y.at(r, c), 0.0);
        s += y.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
      const double k = shift(rng);
      for (std::size_t c = 0; c < 7; ++c) a.at(r, c) += k;
    }
    EXPECT_LT(max_abs_diff(softmax_rows(a), y), 1e-9);
  }
}

TEST(Conv2d, IdentityKernelAndConstantField) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(rng, {1, 5, 4});
  EXPECT_EQ(conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0), x);
  const Tensor c({1, 5, 5}, 0.7);
  const Tensor y = conv2d(c, Tensor({1, 1, 3, 3}, 1.0), Tensor({1}), 1, 1);
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 1; j < 4; ++j) EXPECT_NEAR(y.at(0, i, j), 9 * 0.7, 1e-15);
  EXPECT_NEAR(y.at(0, 0, 0), 4 * 0.7, 1e-15);
}

TEST(Conv2d, Stride2MatchesNestedLoops) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(rng, {2, 8, 6});
  const Tensor w = random_tensor(rng, {3, 2, 3, 3});
  const Tensor b = random_tensor(rng, {3});
  const Tensor y = conv2d(x, w, b, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 4, 3}));
  EXPECT_LT(max_abs_diff(y, conv_oracle(x, w, b, 2, 1)), 1e-12);
}

TEST(Conv2d, RandomizedPropertyAgainstNestedLoops) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> dim(3, 9), ch(1, 3), kern(0, 2), st(1, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = static_cast<std::size_t>(2 * kern(rng) + 1);
    const int pad = static_cast<int>(k / 2);
    const std::size_t h = static_cast<std::size_t>(dim(rng)), w = static_cast<std::size_t>(dim(rng));
    const std::size_t cin = static_cast<std::size_t>(ch(rng)), cout = static_cast<std::size_t>(ch(rng));
    const int stride = st(rng);
    const Tensor x = random_tensor(rng, {cin, h, w});
    const Tensor wt = random_tensor(rng, {cout, cin, k, k});
    const Tensor b = random_tensor(rng, {cout});
    EXPECT_LT(max_abs_diff(conv2d(x, wt, b, stride, pad), conv_oracle(x, wt, b, stride, pad)), 1e-12);
  }
}

TEST(Conv2d, RejectsEmptyOutputAndEvenKernels) {
  EXPECT_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 5, 5}), Tensor({1}), 1, 0), ShapeError);
  EXPECT_THROW(conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 2, 2}), Tensor({1}), 1, 0), ShapeError);
}

TEST(GridSample, IdentityGridReproducesInput) {
  std::mt19937_64 rng(7);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 4}, {8, 6}, {2, 9}, {13, 3}}) {
    const Tensor x = random_tensor(rng, {2, h, w});
    Tensor gx({h, w}), gy({h, w});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        gx.at(y, xx) = -1.0 + 2.0 * static_cast<double>(xx) / static_cast<double>(w - 1);
        gy.at(y, xx) = -1.0 + 2.0 * static_cast<double>(y) / static_cast<double>(h - 1);
      }
    EXPECT_LT(max_abs_diff(grid_sample(x, gx, gy), x), 1e-9);
  }
}

TEST(GridSample, PixelCentresMidpointsAndZeroExtension) {
  const Tensor x({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  // Pixel (row 1, col 2) sits at (+1, +1); the midpoint of (0,0) and (0,1) at (-0.5, -1).
  Tensor gx({1, 4}, std::vector<double>{1.0, -0.5, 3.0, -1.0});
  Tensor gy({1, 4}, std::vector<double>{1.0, -1.0, 0.0, -3.0});
  const Tensor y = grid_sample(x, gx, gy);
  EXPECT_DOUBLE_EQ(y[0], 6.0);
  EXPECT_DOUBLE_EQ(y[1], 1.5);
  EXPECT_DOUBLE_EQ(y[2], 0.0);
  EXPECT_DOUBLE_EQ(y[3], 0.0);
}

TEST(Elementwise, IdentitiesAndLoopOracle) {
  std::mt19937_64 rng(8);
  const Tensor a = random_tensor(rng, {3, 4, 5}), b = random_tensor(rng, {3, 4, 5});
  EXPECT_EQ(add(a, Tensor(a.shape())), a);
  EXPECT_EQ(mul(a, Tensor(a.shape(), 1.0)), a);
  const Tensor s = add(a, b), d = sub(a, b), p = mul(a, b);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_NEAR(s[i], a[i] + b[i], 1e-15);
    EXPECT_NEAR(d[i], a[i] - b[i], 1e-15);
    EXPECT_NEAR(p[i], a[i] * b[i], 1e-15);
  }
  EXPECT_EQ(mul(Tensor::scalar(2.0), a), scale(a, 2.0));
  EXPECT_THROW(add(a, Tensor({3, 4, 4})), ShapeError);
}

TEST(ReshapePermute, RoundTripsAreBitExact) {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor(rng, {3, 4, 5});
  EXPECT_EQ(reshape(reshape(a, {3, 20}), {3, 4, 5}), a);
  const Tensor m = random_tensor(rng, {2, 3});
  EXPECT_EQ(permute(permute(m, {1, 0}), {1, 0}), m);
  const Tensor t = permute(m, {1, 0});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(t.at(j, i), m.at(i, j));
  const Tensor r = permute(a, {2, 0, 1});
  EXPECT_EQ(permute(r, {1, 2, 0}), a);
  EXPECT_THROW(reshape(a, {7, 8}), ShapeError);
  EXPECT_THROW(permute(a, {0, 0, 1}), ShapeError);
}

TEST(Concat, OrderSingleAndSplitRoundTrip) {
  const Tensor ones({1, 2, 2}, 1.0), zeros({1, 2, 2}, 0.0);
  const Tensor c = concat_channels(std::vector<Tensor>{ones, zeros});
  EXPECT_EQ(slice_channels(c, 0, 1), ones);
  EXPECT_EQ(slice_channels(c, 1, 1), zeros);
  EXPECT_EQ(concat_channels(std::vector<Tensor>{ones}), ones);
  std::mt19937_64 rng(10);
  const Tensor a = random_tensor(rng, {5, 3, 2});
  EXPECT_EQ(concat_channels(std::vector<Tensor>{slice_channels(a, 0, 2), slice_channels(a, 2, 3)}), a);
  EXPECT_THROW(concat_channels(std::vector<Tensor>{ones, Tensor({1, 2, 3})}), ShapeError);
}

TEST(Upsample, NearestRepeatsAndBackwardSums) {
  const Tensor x({1, 1, 2}, std::vector<double>{1, 2});
  const Tensor y = upsample_nearest(x, 2);
  EXPECT_EQ(y, Tensor({1, 2, 4}, std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2}));
  EXPECT_EQ(upsample_nearest_backward(y, 2), Tensor({1, 1, 2}, std::vector<double>{4, 8}));
}

TEST(Reduce, SemanticsAndCompensatedOracle) {
  EXPECT_DOUBLE_EQ(reduce(Reduction::kMean, Tensor({4, 3}, 0.3)), 0.3);
  EXPECT_EQ(reduce(Reduction::kAbsSum, Tensor({5}, 0.0)), 0.0);
  EXPECT_THROW(reduce(Reduction::kSum, Tensor()), ArgumentError);
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor(rng, {100}, -1e3, 1e3);
  // Kahan summation, written independently of the library.
  double sum = 0.0, c = 0.0, abs_sum = 0.0, ca = 0.0;
  for (double v : a.values()) {
    double y = v - c, t = sum + y;
    c = (t - sum) - y;
    sum = t;
    y = std::abs(v) - ca;
    t = abs_sum + y;
    ca = (t - abs_sum) - y;
    abs_sum = t;
  }
  EXPECT_NEAR(reduce(Reduction::kSum, a), sum, 1e-10);
  EXPECT_NEAR(reduce(Reduction::kMean, a), sum / 100.0, 1e-10);
  EXPECT_NEAR(reduce(Reduction::kAbsSum, a), abs_sum, 1e-10);
}

TEST(Reduce, AbsSumOverCountIsL1Distance) {
  std::mt19937_64 rng(12);
  const Tensor a = random_tensor(rng, {2, 3, 3}), b = random_tensor(rng, {2, 3, 3});
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) l1 += std::abs(a[i] - b[i]);
  EXPECT_NEAR(reduce(Reduction::kAbsSum, sub(a, b)) / 18.0, l1 / 18.0, 1e-14);
}

TEST(Hcat, RoundTripAndLayout) {
  std::mt19937_64 rng(13);
  const Tensor a = random_tensor(rng, {2, 3, 4});
  std::stringstream ss;
  write_hcat(ss, a);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4 + 4 + 3 * 4 + 24 * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "HCAT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 3);
  std::size_t offset = 0;
  EXPECT_EQ(read_hcat(ss, offset), a);
  EXPECT_EQ(offset, bytes.size());
}

TEST(Hcat, CorruptionReportsOffset) {
  std::stringstream bad_magic("HCAX\x01\x00\x00\x00");
  std::size_t offset = 0;
  EXPECT_THROW(read_hcat(bad_magic, offset), FormatError);

  std::stringstream ss;
  write_hcat(ss, Tensor({3}, 1.0));
  std::string truncated = ss.str();
  truncated.resize(truncated.size() - 3);
  std::stringstream in(truncated);
  offset = 0;
  try {
    read_hcat(in, offset);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u + 4u + 4u + 16u);
  }

  std::string rank0("HCAT\0\0\0\0", 8);
  std::stringstream r0(rank0);
  offset = 0;
  EXPECT_THROW(read_hcat(r0, offset), FormatError);
}

}  // namespace
}  // namespace hcanet
