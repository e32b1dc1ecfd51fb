#include "hcanet/losses.hpp"

#include <cmath>

#include "hcanet/branch_tape.hpp"

namespace hcanet::losses {

void LossWeights::validate() const {
  for (double v : {lambda_1, lambda_2, lambda_reg, lambda_vgg, lambda_mask}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ArgumentError("loss weights must be finite and non-negative");
    }
  }
}

Var l1_loss(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1_loss: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  return ad::mean(ad::abs(ad::sub(a, b)));
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Visits every (centre, neighbour) index pair counted by the regularizer.
template <typename F>
void for_each_pair(std::size_t h, std::size_t w, F&& f) {
  for (std::size_t y = 1; y + 1 < h; ++y) {
    for (std::size_t x = 1; x + 1 < w; ++x) {
      const std::size_t c = y * w + x;
      f(c, c - 1);
      f(c, c + 1);
      f(c, c - w);
      f(c, c + w);
    }
  }
}

Var axis_regularization(const Var& g) {
  const Shape& s = g.shape();
  if (s.size() != 2 || s[0] < 3 || s[1] < 3) {
    throw ShapeError("grid_regularization: grid must be at least 3×3, got " + to_string(s));
  }
  const std::size_t h = s[0], w = s[1];
  const Tensor& v = g.value();
  std::vector<double> terms;
  terms.reserve(4 * (h - 2) * (w - 2));
  for_each_pair(h, w, [&](std::size_t c, std::size_t n) {
    const double d = v[n] - v[c];
    terms.push_back(static_cast<double>(pinned_branch(static_cast<long>(sign(d)))) * d);
  });
  return ad::make_op(Tensor::scalar(compensated_sum(terms)), "grid_regularization", {g}, [h, w](ad::Node& self) {
    ad::Node& p = *self.parents[0];
    Tensor grad(p.value.shape());
    const double up = self.grad[0];
    for_each_pair(h, w, [&](std::size_t c, std::size_t n) {
      const double s = sign(p.value[n] - p.value[c]) * up;
      grad[n] += s;
      grad[c] -= s;
    });
    p.accumulate(grad);
  });
}

}  // namespace

Var grid_regularization(const tps::Grid& grid, bool gx_only) {
  Var rx = axis_regularization(grid.gx);
  if (gx_only) return rx;
  return ad::add(rx, axis_regularization(grid.gy));
}

// ---------------------------------------------------------------------------

nn::NetSpec PerceptualNet::spec() {
  nn::NetSpec s;
  nn::append_conv(s, "perceptual.level0", {3, 8, 3, 1, 1});
  nn::append_conv(s, "perceptual.level1", {8, 16, 3, 2, 1});
  nn::append_conv(s, "perceptual.level2", {16, 32, 3, 2, 1});
  return s;
}

namespace {

nn::ModelParams frozen(const nn::ModelParams& source) {
  nn::ModelParams out;
  for (const auto& [name, v] : source) out.add_buffer(name, v.value());
  return out;
}

}  // namespace

PerceptualNet::PerceptualNet(std::uint64_t seed)
    : params_(frozen(nn::init_params(spec(), seed))) {}

PerceptualNet::PerceptualNet(nn::ModelParams params) : params_(std::move(params)) {}

PerceptualNet PerceptualNet::from_checkpoint(const std::string& path) {
  nn::ModelParams loaded = nn::load_checkpoint(path);
  for (const auto& w : spec()) {
    if (!loaded.contains(w.name) || loaded.at(w.name).shape() != w.shape) {
      throw ArgumentError("perceptual weights '" + path + "' lack a " + to_string(w.shape) +
                          " tensor named " + w.name);
    }
  }
  return PerceptualNet(frozen(loaded));
}

std::vector<Var> PerceptualNet::features(const Var& image) const {
  std::vector<Var> out;
  Var h = ad::leaky_relu(nn::apply_conv(params_, "perceptual.level0", image, 1, 1));
  out.push_back(h);
  h = ad::leaky_relu(nn::apply_conv(params_, "perceptual.level1", h, 2, 1));
  out.push_back(h);
  h = ad::leaky_relu(nn::apply_conv(params_, "perceptual.level2", h, 2, 1));
  out.push_back(h);
  return out;
}

Var perceptual_loss(const Var& a, const Var& b, const PerceptualNet& net) {
  if (a.shape() != b.shape() || a.shape().size() != 3 || a.shape()[0] != 3) {
    throw ShapeError("perceptual_loss: expected two 3×H×W images, got " + to_string(a.shape()) +
                     " and " + to_string(b.shape()));
  }
  const auto fa = net.features(a);
  const auto fb = net.features(b);
  Var total = l1_loss(fa[0], fb[0]);
  for (std::size_t i = 1; i < fa.size(); ++i) total = ad::add(total, l1_loss(fa[i], fb[i]));
  return total;
}

Var compose_output(const Var& m_o, const Var& warped, const Var& rendered) {
  if (warped.shape() != rendered.shape() || m_o.shape().size() != 3 || m_o.shape()[0] != 1 ||
      m_o.shape()[1] != warped.shape()[1] || m_o.shape()[2] != warped.shape()[2]) {
    throw ShapeError("compose_output: expected 1×H×W mask and matching C×H×W images, got " +
                     to_string(m_o.shape()) + ", " + to_string(warped.shape()) + ", " +
                     to_string(rendered.shape()));
  }
  for (double v : m_o.value().values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("compose_output: mask values must lie in [0,1]");
  }
  std::vector<Var> copies(warped.shape()[0], m_o);
  Var mask = copies.size() == 1 ? m_o : ad::concat_channels(copies);
  return ad::add(ad::mul(mask, warped), ad::mul(ad::one_minus(mask), rendered));
}

MatchingTerms matching_loss(const Var& warped_c, const Var& gt_ct, const tps::Grid& grid,
                            const Var& warped_cm, const Var& gt_tm, const LossWeights& w,
                            bool use_mask_term, bool reg_gx_only) {
  w.validate();
  MatchingTerms t;
  t.l1 = l1_loss(warped_c, gt_ct);
  t.reg = grid_regularization(grid, reg_gx_only);
  t.total = ad::add(ad::scale(t.l1, w.lambda_1), ad::scale(t.reg, w.lambda_reg));
  if (use_mask_term) {
    t.mask = l1_loss(warped_cm, gt_tm);
    t.total = ad::add(t.total, ad::scale(t.mask, w.lambda_2));
  }
  return t;
}

TryonTerms tryon_loss(const Var& i_o, const Var& i_gt, const Var& m_o, const Var& i_tm,
                      const PerceptualNet& net, const LossWeights& w) {
  w.validate();
  TryonTerms t;
  t.l1 = l1_loss(i_o, i_gt);
  t.vgg = perceptual_loss(i_o, i_gt, net);
  t.mask = l1_loss(m_o, i_tm);
  t.total = ad::add(ad::add(ad::scale(t.l1, w.lambda_1), ad::scale(t.vgg, w.lambda_vgg)),
                    ad::scale(t.mask, w.lambda_mask));
  return t;
}

}  // namespace hcanet::losses
