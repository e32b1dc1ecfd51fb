#include "hcanet/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "hcanet/pipeline.hpp"

namespace hcanet::gradcheck {

namespace {

using ad::Var;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }
  // Magnitude in [lo, hi] with random sign; keeps values away from kinks at zero.
  double away_from_zero(double lo, double hi) {
    const double m = uniform(lo, hi);
    return engine_() & 1 ? m : -m;
  }

 private:
  std::mt19937_64 engine_;
};

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor nonzero_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.away_from_zero(0.1, 1.0);
  return t;
}

// Σ out ⊙ R for a fixed random R: a generic scalar read-out of any tensor-valued op.
Var project(const Var& out, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul(out, ad::constant(random_tensor(rng, out.shape()))));
}

struct Case {
  std::string name;
  std::function<double()> run;
};

struct Suite {
  std::string module;
  double tolerance;
  std::function<std::vector<Case>()> cases;
};

double check(const std::function<Var()>& f, const std::vector<Var>& params,
             ad::GradCheckOptions opts = {}) {
  return ad::grad_check(f, params, opts);
}

// Trainable parameters under `prefix`, minus attention key biases (identically zero gradient).
std::vector<Var> probe_parameters(const nn::ModelParams& params, const std::string& prefix) {
  std::vector<Var> out;
  for (const auto& [name, v] : params) {
    if (!v.trainable() || !name.starts_with(prefix)) continue;
    if (name.ends_with(".person.proj3.bias") || name.ends_with(".cross.p3.bias") ||
        name.ends_with(".cross.c3.bias")) {
      continue;
    }
    out.push_back(v);
  }
  return out;
}

// ---- primitives ---------------------------------------------------------------------

std::vector<Case> primitive_cases() {
  std::vector<Case> cases;
  cases.push_back({"matmul", [] {
    Rng rng(1);
    Var a = ad::parameter(random_tensor(rng, {3, 4}));
    Var b = ad::parameter(random_tensor(rng, {4, 2}));
    return check([&] { return project(ad::matmul(a, b), 11); }, {a, b});
  }});
  cases.push_back({"softmax_rows", [] {
    Rng rng(2);
    Var a = ad::parameter(random_tensor(rng, {3, 5}, -2.0, 2.0));
    return check([&] { return project(ad::softmax_rows(a), 12); }, {a});
  }});
  for (int stride : {1, 2}) {
    cases.push_back({"conv2d_stride" + std::to_string(stride), [stride] {
      Rng rng(3 + static_cast<std::uint64_t>(stride));
      Var x = ad::parameter(random_tensor(rng, {2, 5, 6}));
      Var w = ad::parameter(random_tensor(rng, {3, 2, 3, 3}));
      Var b = ad::parameter(random_tensor(rng, {3}));
      return check([&] { return project(ad::conv2d(x, w, b, stride, 1), 13); }, {x, w, b});
    }});
  }
  cases.push_back({"grid_sample", [] {
    Rng rng(5);
    const std::size_t h = 4, w = 5, gh = 3, gw = 4;
    Var x = ad::parameter(random_tensor(rng, {2, h, w}));
    // Pixel positions with fractional parts in [0.2, 0.8], partly outside the image.
    auto coords = [&](std::size_t n) {
      Tensor g({gh, gw});
      for (double& v : g.values()) {
        const double p = std::floor(rng.uniform(-1.0, static_cast<double>(n))) + rng.uniform(0.2, 0.8);
        v = 2.0 * p / static_cast<double>(n - 1) - 1.0;
      }
      return g;
    };
    Var gx = ad::parameter(coords(w));
    Var gy = ad::parameter(coords(h));
    return check([&] { return project(ad::grid_sample(x, gx, gy), 14); }, {x, gx, gy});
  }});
  cases.push_back({"add_sub_mul", [] {
    Rng rng(6);
    Var a = ad::parameter(random_tensor(rng, {2, 3}));
    Var b = ad::parameter(random_tensor(rng, {2, 3}));
    Var s = ad::parameter(random_tensor(rng, {1}));
    return check([&] {
      return project(ad::add(ad::mul(ad::sub(a, b), a), ad::mul(b, s)), 15);
    }, {a, b, s});
  }});
  cases.push_back({"scale_add_scalar_one_minus", [] {
    Rng rng(7);
    Var a = ad::parameter(random_tensor(rng, {4}));
    return check([&] { return project(ad::one_minus(ad::add_scalar(ad::scale(a, -1.7), 0.3)), 16); }, {a});
  }});
  cases.push_back({"abs", [] {
    Rng rng(8);
    Var a = ad::parameter(nonzero_tensor(rng, {6}));
    return check([&] { return project(ad::abs(a), 17); }, {a});
  }});
  cases.push_back({"reshape_permute", [] {
    Rng rng(9);
    Var a = ad::parameter(random_tensor(rng, {2, 3, 4}));
    return check([&] { return project(ad::permute(ad::reshape(a, {6, 4}), {1, 0}), 18); }, {a});
  }});
  cases.push_back({"concat_slice", [] {
    Rng rng(10);
    Var a = ad::parameter(random_tensor(rng, {2, 2, 3}));
    Var b = ad::parameter(random_tensor(rng, {1, 2, 3}));
    return check([&] { return project(ad::slice_channels(ad::concat_channels({a, b, a}), 1, 3), 19); }, {a, b});
  }});
  cases.push_back({"upsample_nearest", [] {
    Rng rng(11);
    Var a = ad::parameter(random_tensor(rng, {2, 2, 3}));
    return check([&] { return project(ad::upsample_nearest(a, 2), 20); }, {a});
  }});
  cases.push_back({"relu_leaky_relu", [] {
    Rng rng(12);
    Var a = ad::parameter(nonzero_tensor(rng, {8}));
    return check([&] { return project(ad::add(ad::relu(a), ad::leaky_relu(a, 0.2)), 21); }, {a});
  }});
  cases.push_back({"tanh_sigmoid", [] {
    Rng rng(13);
    Var a = ad::parameter(random_tensor(rng, {8}, -2.0, 2.0));
    return check([&] { return project(ad::add(ad::tanh(a), ad::sigmoid(a)), 22); }, {a});
  }});
  cases.push_back({"sum_mean_abs_sum", [] {
    Rng rng(14);
    Var a = ad::parameter(nonzero_tensor(rng, {2, 3}));
    return check([&] { return ad::add(ad::add(ad::sum(a), ad::scale(ad::mean(a), 2.0)), ad::abs_sum(a)); }, {a});
  }});
  return cases;
}

// ---- nn -----------------------------------------------------------------------------

std::vector<Case> nn_cases() {
  std::vector<Case> cases;
  cases.push_back({"extractor", [] {
    Rng rng(21);
    const nn::ModelParams p = nn::init_params(nn::extractor_spec("e", 2, 4), 21);
    Var x = ad::parameter(random_tensor(rng, {2, 8, 8}));
    auto params = p.parameters();
    params.push_back(x);
    return check([&] { return project(nn::extractor_forward(p, "e", x), 31); }, params);
  }});
  cases.push_back({"regressor", [] {
    Rng rng(22);
    const nn::ModelParams p =
        nn::init_params(nn::regressor_spec("r", {3, 4, 5, 2}, nn::Init::kKaimingUniform), 22);
    Var x = ad::parameter(random_tensor(rng, {3, 4, 5}));
    auto params = p.parameters();
    params.push_back(x);
    return check([&] { return project(nn::regressor_forward(p, "r", x), 32); }, params);
  }});
  cases.push_back({"unet", [] {
    Rng rng(23);
    const nn::UnetShape shape{3, 4, 2};
    const nn::ModelParams p = nn::init_params(nn::unet_spec("u", shape), 23);
    Var x = ad::parameter(random_tensor(rng, {3, 8, 8}));
    auto params = p.parameters();
    params.push_back(x);
    return check([&] { return project(nn::unet_forward(p, "u", shape, x), 33); }, params,
                 {1e-5, 6, 23});
  }});
  return cases;
}

// ---- hca ----------------------------------------------------------------------------

std::vector<Case> hca_cases() {
  std::vector<Case> cases;
  cases.push_back({"person_cross_attention", [] {
    Rng rng(41);
    const nn::ModelParams p = nn::init_params(hca::hca_spec("h", 3), 41);
    hca::PersonFeatures f{ad::parameter(random_tensor(rng, {3, 2, 3})),
                          ad::parameter(random_tensor(rng, {3, 2, 3})),
                          ad::parameter(random_tensor(rng, {3, 2, 3}))};
    auto params = probe_parameters(p, "h.person");
    params.insert(params.end(), {f.x_p1, f.x_p2, f.x_p3});
    return check([&] { return project(hca::person_cross_attention(f, p, "h"), 51); }, params);
  }});
  cases.push_back({"cross_attention_pc", [] {
    Rng rng(42);
    const nn::ModelParams p = nn::init_params(hca::hca_spec("h", 3), 42);
    Var ph = ad::parameter(random_tensor(rng, {3, 2, 3}));
    Var c = ad::parameter(random_tensor(rng, {3, 2, 3}));
    auto params = probe_parameters(p, "h.cross");
    params.insert(params.end(), {ph, c});
    return check([&] { return project(hca::cross_attention_pc(ph, c, p, "h"), 52); }, params);
  }});
  cases.push_back({"hca_forward", [] {
    Rng rng(43);
    const nn::ModelParams p = nn::init_params(hca::hca_spec("h", 4), 43);
    auto params = probe_parameters(p, "h");
    hca::PersonFeatures f{ad::constant(random_tensor(rng, {4, 3, 3})),
                          ad::constant(random_tensor(rng, {4, 3, 3})),
                          ad::constant(random_tensor(rng, {4, 3, 3}))};
    Var c = ad::parameter(random_tensor(rng, {4, 3, 3}));
    params.push_back(c);
    return check([&] { return project(hca::hca_forward(f, c, p, "h"), 53); }, params);
  }});
  return cases;
}

// ---- tps ----------------------------------------------------------------------------

std::vector<Case> tps_cases() {
  std::vector<Case> cases;
  cases.push_back({"tps_grid", [] {
    Rng rng(61);
    const tps::TpsBasis basis(3, 6, 5);
    Var theta = ad::parameter(random_tensor(rng, {18}, -0.2, 0.2));
    return check([&] {
      const tps::Grid g = tps::tps_grid(theta, basis);
      return ad::add(project(g.gx, 71), project(g.gy, 72));
    }, {theta});
  }});
  cases.push_back({"warp", [] {
    Rng rng(62);
    const tps::TpsBasis basis(3, 9, 7);
    const Var image = ad::constant(random_tensor(rng, {3, 9, 7}, 0.0, 1.0));
    Var theta = ad::parameter(random_tensor(rng, {18}, -0.15, 0.15));
    return check([&] { return project(tps::warp(image, theta, basis), 73); }, {theta});
  }});
  return cases;
}

// ---- losses -------------------------------------------------------------------------

std::vector<Case> loss_cases() {
  std::vector<Case> cases;
  cases.push_back({"l1_loss", [] {
    Rng rng(81);
    Var a = ad::parameter(random_tensor(rng, {2, 3, 3}));
    Var b = ad::constant(random_tensor(rng, {2, 3, 3}));
    return check([&] { return losses::l1_loss(a, b); }, {a});
  }});
  cases.push_back({"grid_regularization", [] {
    Rng rng(82);
    Var gx = ad::parameter(random_tensor(rng, {4, 5}));
    Var gy = ad::parameter(random_tensor(rng, {4, 5}));
    return check([&] { return losses::grid_regularization({gx, gy}); }, {gx, gy});
  }});
  cases.push_back({"perceptual_loss", [] {
    Rng rng(83);
    const losses::PerceptualNet net;
    Var a = ad::parameter(random_tensor(rng, {3, 8, 8}, 0.0, 1.0));
    Var b = ad::constant(random_tensor(rng, {3, 8, 8}, 0.0, 1.0));
    return check([&] { return losses::perceptual_loss(a, b, net); }, {a}, {1e-5, 24, 83});
  }});
  cases.push_back({"compose_output", [] {
    Rng rng(84);
    Var m = ad::parameter(random_tensor(rng, {1, 3, 4}, 0.1, 0.9));
    Var w = ad::parameter(random_tensor(rng, {3, 3, 4}, 0.0, 1.0));
    Var r = ad::parameter(random_tensor(rng, {3, 3, 4}, 0.0, 1.0));
    return check([&] { return project(losses::compose_output(m, w, r), 91); }, {m, w, r});
  }});
  return cases;
}

// ---- pipeline (end to end) ----------------------------------------------------------

pipeline::ModelConfig tiny_config() {
  pipeline::ModelConfig c;
  c.height = 32;
  c.width = 24;
  c.features = 4;
  c.unet_depth = 2;
  c.unet_channels = 4;
  return c;
}

// Generic probe point: random biases and regressor head, attention projections doubled.
pipeline::TryOnModel probe_model(std::uint64_t seed) {
  pipeline::TryOnModel model(tiny_config(), seed);
  Rng rng(seed);
  for (const auto& [name, v] : model.params()) {
    if (!v.trainable()) continue;
    Tensor& value = Var(v).mutable_value();
    if (name.starts_with("stage1.regressor.head.") || name.ends_with(".bias")) {
      for (double& x : value.values()) x = rng.uniform(-0.05, 0.05);
    } else if (name.find(".hca.") != std::string::npos) {
      for (double& x : value.values()) x *= 2.0;
    }
  }
  return model;
}

// Pinned branches with a Richardson-extrapolated step.
constexpr ad::GradCheckOptions end_to_end_options(std::uint64_t seed, std::size_t per_param) {
  return {.step = 3e-3, .max_elements_per_param = per_param, .seed = seed,
          .pin_branches = true, .richardson = true};
}

std::vector<Case> pipeline_cases() {
  std::vector<Case> cases;
  cases.push_back({"matching_loss_end_to_end", [] {
    const pipeline::TryOnModel model = probe_model(101);
    const data::Sample s = data::synth_sample(data::random_spec(101, 32, 24));
    return check([&] {
      const auto o = pipeline::stage1_forward(model, s);
      return losses::matching_loss(o.warped_c, ad::constant(s.gt_warped), o.grid, o.warped_cm,
                                   ad::constant(s.gt_onbody_mask), {}, true).total;
    }, probe_parameters(model.params(), "stage1."), end_to_end_options(101, 16));
  }});
  cases.push_back({"tryon_loss_end_to_end", [] {
    const pipeline::TryOnModel model = probe_model(102);
    const data::Sample s = data::synth_sample(data::random_spec(102, 32, 24));
    const losses::PerceptualNet net;
    return check([&] {
      const auto o1 = pipeline::stage1_forward(model, s);
      const auto o2 = pipeline::stage2_forward(model, s, o1.warped_c, o1.warped_cm);
      return losses::tryon_loss(o2.i_o, ad::constant(s.gt_image), o2.m_o,
                                ad::constant(s.gt_onbody_mask), net, {}).total;
    }, probe_parameters(model.params(), ""), end_to_end_options(102, 8));
  }});
  return cases;
}

const std::vector<Suite>& suites() {
  static const std::vector<Suite> all = {
      {"primitives", kPrimitiveTolerance, primitive_cases},
      {"nn", kCompositeTolerance, nn_cases},
      {"hca", kCompositeTolerance, hca_cases},
      {"tps", kCompositeTolerance, tps_cases},
      {"losses", kCompositeTolerance, loss_cases},
      {"pipeline", kCompositeTolerance, pipeline_cases},
  };
  return all;
}

}  // namespace

std::vector<std::string> modules() {
  std::vector<std::string> out;
  for (const auto& s : suites()) out.push_back(s.module);
  return out;
}

std::vector<Row> run(const std::string& module) {
  bool found = module.empty();
  std::vector<Row> rows;
  for (const auto& suite : suites()) {
    if (!module.empty() && suite.module != module) continue;
    found = true;
    for (const auto& c : suite.cases()) rows.push_back({suite.module, c.name, c.run(), suite.tolerance});
  }
  if (!found) throw ArgumentError("unknown gradcheck module '" + module + "'");
  return rows;
}

}  // namespace hcanet::gradcheck
