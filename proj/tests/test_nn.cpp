#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "hcanet/nn.hpp"
#include "test_support.hpp"

namespace hcanet::nn {
namespace {

using testing::random_tensor;

void fill(ModelParams& params, double value) {
  for (const auto& [name, v] : params) {
    for (double& x : Var(v).mutable_value().values()) x = value;
  }
}

void randomize(ModelParams& params, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  for (const auto& [name, v] : params) {
    Tensor& t = Var(v).mutable_value();
    t = random_tensor(rng, t.shape(), -scale, scale);
  }
}

TEST(Init, DeterministicPerSeedAndBounded) {
  const NetSpec spec = extractor_spec("e", 3, 8);
  const ModelParams a = init_params(spec, 5), b = init_params(spec, 5), c = init_params(spec, 6);
  bool differs = false;
  for (const auto& w : spec) {
    EXPECT_EQ(a.at(w.name).value(), b.at(w.name).value());
    if (w.init == Init::kZero) {
      for (double v : a.at(w.name).value().values()) EXPECT_EQ(v, 0.0);
      continue;
    }
    differs = differs || !(a.at(w.name).value() == c.at(w.name).value());
    const double bound = std::sqrt(6.0 / static_cast<double>(w.fan_in));
    for (double v : a.at(w.name).value().values()) EXPECT_LE(std::abs(v), bound);
  }
  EXPECT_TRUE(differs);
}

TEST(Params, NamesAreUniqueAndBuffersAreNotTrainable) {
  ModelParams p;
  p.add_parameter("a.weight", Tensor({2}));
  p.add_buffer("meta.x", Tensor({1}));
  EXPECT_THROW(p.add_parameter("a.weight", Tensor({2})), ArgumentError);
  EXPECT_EQ(p.parameters().size(), 1u);
  EXPECT_EQ(p.parameter_count(), 2u);
  EXPECT_THROW(p.at("missing"), ArgumentError);
}

TEST(Extractor, QuartersSpatialDims) {
  const ModelParams p = init_params(extractor_spec("e", 3, 8), 1);
  std::mt19937_64 rng(1);
  const Var y = extractor_forward(p, "e", ad::constant(random_tensor(rng, {3, 32, 24})));
  EXPECT_EQ(y.shape(), (Shape{8, 8, 6}));
  EXPECT_THROW(extractor_forward(p, "e", ad::constant(Tensor({3, 30, 24}))), ShapeError);
}

TEST(Extractor, ZeroWeightsGiveZeroOutput) {
  ModelParams p = init_params(extractor_spec("e", 3, 4), 1);
  fill(p, 0.0);
  std::mt19937_64 rng(2);
  const Var y = extractor_forward(p, "e", ad::constant(random_tensor(rng, {3, 16, 12})));
  for (double v : y.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Extractor, BitIdenticalAcrossRuns) {
  const ModelParams p = init_params(extractor_spec("e", 3, 8), 11);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {3, 16, 12});
  const ModelParams q = init_params(extractor_spec("e", 3, 8), 11);
  EXPECT_EQ(extractor_forward(p, "e", ad::constant(x)).value(),
            extractor_forward(q, "e", ad::constant(x)).value());
}

TEST(Regressor, ZeroHeadGivesZeroThetaOfLength2kSquared) {
  const RegressorShape shape{8, 8, 6, 5};
  const ModelParams p = init_params(regressor_spec("r", shape), 1);
  std::mt19937_64 rng(4);
  const Var theta = regressor_forward(p, "r", ad::constant(random_tensor(rng, {8, 8, 6})));
  EXPECT_EQ(theta.shape(), (Shape{50}));
  for (double v : theta.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Regressor, OutputsStayInsideOpenUnitInterval) {
  const RegressorShape shape{4, 8, 6, 3};
  ModelParams p = init_params(regressor_spec("r", shape, Init::kKaimingUniform), 2);
  randomize(p, 2, 0.5);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const Var theta = regressor_forward(p, "r", ad::constant(random_tensor(rng, {4, 8, 6})));
    EXPECT_EQ(theta.shape(), (Shape{18}));
    for (double v : theta.value().values()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Regressor, RejectsTinyMaps) {
  EXPECT_THROW(regressor_spec("r", {4, 2, 6, 5}), ShapeError);
}

TEST(Unet, PreservesSizeAndBoundsOutputs) {
  const UnetShape s{6, 4, 2};
  ModelParams p = init_params(unet_spec("u", s), 3);
  randomize(p, 3, 1.0);
  std::mt19937_64 rng(6);
  const Var y = unet_forward(p, "u", s, ad::constant(random_tensor(rng, {6, 32, 24})));
  EXPECT_EQ(y.shape(), (Shape{4, 32, 24}));
  for (double v : y.value().values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(unet_forward(p, "u", s, ad::constant(Tensor({6, 30, 24}))), ShapeError);
}

TEST(Unet, SkipAblationChangesOutput) {
  const UnetShape s{3, 4, 2};
  ModelParams p = init_params(unet_spec("u", s), 4);
  randomize(p, 4);
  std::mt19937_64 rng(7);
  const Var x = ad::constant(random_tensor(rng, {3, 16, 12}));
  const Tensor with = unet_forward(p, "u", s, x).value();
  const Tensor without = unet_forward(p, "u", s, x, 0.0).value();
  EXPECT_GT(testing::max_abs_diff(with, without), 1e-6);
}

ad::GradCheckOptions pinned_options() {
  ad::GradCheckOptions opts;
  opts.step = 3e-3;
  opts.pin_branches = true;
  opts.richardson = true;
  return opts;
}

double l1_grad_check(const ModelParams& p, const std::function<Var()>& forward, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor target = random_tensor(rng, forward().shape(), 3.0, 4.0);
  auto f = [&] { return ad::mean(ad::abs(ad::sub(forward(), ad::constant(target)))); };
  return ad::grad_check(f, p.parameters(), pinned_options());
}

TEST(Forwards, PassGradCheckUnderL1) {
  std::mt19937_64 rng(8);
  {
    ModelParams p = init_params(extractor_spec("e", 2, 3), 5);
    randomize(p, 5);
    const Var x = ad::constant(random_tensor(rng, {2, 8, 8}));
    EXPECT_LT(l1_grad_check(p, [&] { return extractor_forward(p, "e", x); }, 1), 1e-4);
  }
  {
    ModelParams p = init_params(regressor_spec("r", {3, 4, 4, 2}, Init::kKaimingUniform), 6);
    randomize(p, 6);
    const Var x = ad::constant(random_tensor(rng, {3, 4, 4}));
    EXPECT_LT(l1_grad_check(p, [&] { return regressor_forward(p, "r", x); }, 2), 1e-4);
  }
  {
    const UnetShape s{2, 2, 1};
    ModelParams p = init_params(unet_spec("u", s), 7);
    randomize(p, 7);
    const Var x = ad::constant(random_tensor(rng, {2, 8, 6}));
    EXPECT_LT(l1_grad_check(p, [&] { return unet_forward(p, "u", s, x); }, 3), 1e-4);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelParams p = init_params(extractor_spec("e", 3, 4), 9);
  randomize(p, 9);
  p.add_buffer("meta.tag", Tensor({2}, std::vector<double>{1.5, -2.0}));
  std::stringstream ss;
  write_checkpoint(ss, p);
  const ModelParams q = read_checkpoint(ss);
  ASSERT_EQ(q.size(), p.size());
  auto it = q.begin();
  for (const auto& [name, v] : p) {
    EXPECT_EQ(it->first, name);
    EXPECT_EQ(it->second.value(), v.value());
    EXPECT_EQ(it->second.trainable(), v.trainable());
    ++it;
  }
}

TEST(Checkpoint, HeaderLayoutAndCorruption) {
  ModelParams p;
  p.add_parameter("w", Tensor({1}, 2.0));
  std::stringstream ss;
  write_checkpoint(ss, p);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "HCAC");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);  // u16 name length
  EXPECT_EQ(bytes[10], 'w');
  EXPECT_EQ(bytes.substr(11, 4), "HCAT");

  std::stringstream bad("HCAX");
  EXPECT_THROW(read_checkpoint(bad), FormatError);
  std::stringstream cut(bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(read_checkpoint(cut), FormatError);
}

}  // namespace
}  // namespace hcanet::nn
