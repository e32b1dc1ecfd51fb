#include "hcanet/metrics.hpp"

#include <array>
#include <cmath>

namespace hcanet::metrics {

double iou(const Tensor& a, const Tensor& b, double threshold) {
  if (a.shape() != b.shape()) {
    throw ShapeError("iou: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const bool x = a[i] > threshold, y = b[i] > threshold;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_1d() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable "valid" filtering of one channel: (H-10)×(W-10) output.
std::vector<double> filter(const double* src, std::size_t h, std::size_t w,
                           const std::array<double, kWindow>& g) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * src[y * w + x + k];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 3) {
    throw ShapeError("ssim: expected two equal C×H×W images, got " + to_string(a.shape()) +
                     " and " + to_string(b.shape()));
  }
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (h < kWindow || w < kWindow) throw ArgumentError("ssim: images must be at least 11×11");
  const auto g = gaussian_1d();
  const std::size_t plane = h * w;
  double total = 0.0;
  std::vector<double> aa(plane), bb(plane), ab(plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* pa = a.data() + ch * plane;
    const double* pb = b.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter(pa, h, w, g), mu_b = filter(pb, h, w, g);
    const auto e_aa = filter(aa.data(), h, w, g), e_bb = filter(bb.data(), h, w, g);
    const auto e_ab = filter(ab.data(), h, w, g);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      sum += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
             ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(c);
}

}  // namespace hcanet::metrics
