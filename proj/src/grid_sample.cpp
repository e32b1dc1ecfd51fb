#include <cmath>

#include "hcanet/branch_tape.hpp"
#include "hcanet/tensor.hpp"

namespace hcanet {

namespace {

void check_grid(const Tensor& x, const Tensor& gx, const Tensor& gy) {
  if (x.rank() != 3) {
    throw ShapeError("grid_sample: input must be C×H×W, got " + to_string(x.shape()));
  }
  if (gx.rank() != 2 || gx.shape() != gy.shape()) {
    throw ShapeError("grid_sample: grid components must share an H×W shape, got " +
                     to_string(gx.shape()) + " and " + to_string(gy.shape()));
  }
}

// One bilinear tap layout. The lower cell index is ceil(p) - 1, so a coordinate landing
// exactly on a pixel center belongs to the left/upper cell; this fixes the tie for the
// coordinate derivative and leaves sampled values unchanged.
struct Tap {
  long x0, y0;
  double wx1, wy1;  // weight of the right / lower neighbour
  double sx, sy;    // d(pixel coordinate) / d(normalized coordinate)
};

inline Tap make_tap(double gx, double gy, std::size_t h, std::size_t w, bool pin = false) {
  const double sx = 0.5 * static_cast<double>(w - 1);
  const double sy = 0.5 * static_cast<double>(h - 1);
  const double px = (gx + 1.0) * sx;
  const double py = (gy + 1.0) * sy;
  double cx = std::ceil(px) - 1.0;
  double cy = std::ceil(py) - 1.0;
  if (pin) {
    cx = static_cast<double>(pinned_branch(static_cast<long>(cx)));
    cy = static_cast<double>(pinned_branch(static_cast<long>(cy)));
  }
  return {static_cast<long>(cx), static_cast<long>(cy), px - cx, py - cy, sx, sy};
}

inline bool inside(long v, std::size_t n) { return v >= 0 && v < static_cast<long>(n); }

// Coordinates far outside the image would overflow the long conversion; anything this far out
// samples only zeros anyway.
inline bool far_outside(double g) { return !(std::abs(g) < 1e6); }

}  // namespace

Tensor grid_sample(const Tensor& x, const Tensor& gx, const Tensor& gy) {
  check_grid(x, gx, gy);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t ho = gx.dim(0), wo = gx.dim(1);
  Tensor out({c, ho, wo});
  for (std::size_t i = 0; i < ho * wo; ++i) {
    if (far_outside(gx[i]) || far_outside(gy[i])) continue;
    const Tap t = make_tap(gx[i], gy[i], h, w, true);
    const long xs[2] = {t.x0, t.x0 + 1};
    const long ys[2] = {t.y0, t.y0 + 1};
    const double wxs[2] = {1.0 - t.wx1, t.wx1};
    const double wys[2] = {1.0 - t.wy1, t.wy1};
    for (int a = 0; a < 2; ++a) {
      if (!inside(ys[a], h)) continue;
      for (int b = 0; b < 2; ++b) {
        if (!inside(xs[b], w)) continue;
        const double wgt = wys[a] * wxs[b];
        const std::size_t src = static_cast<std::size_t>(ys[a]) * w + static_cast<std::size_t>(xs[b]);
        for (std::size_t ch = 0; ch < c; ++ch) out[ch * ho * wo + i] += wgt * x[ch * h * w + src];
      }
    }
  }
  return out;
}

GridSampleGrads grid_sample_backward(const Tensor& x, const Tensor& gx, const Tensor& gy,
                                     const Tensor& grad_out) {
  check_grid(x, gx, gy);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t ho = gx.dim(0), wo = gx.dim(1);
  if (grad_out.shape() != Shape{c, ho, wo}) {
    throw ShapeError("grid_sample_backward: gradient shape " + to_string(grad_out.shape()) +
                     " does not match output");
  }
  GridSampleGrads grads{Tensor(x.shape()), Tensor(gx.shape()), Tensor(gy.shape())};
  auto pixel = [&](std::size_t ch, long yy, long xx) {
    return inside(yy, h) && inside(xx, w)
               ? x[ch * h * w + static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)]
               : 0.0;
  };
  for (std::size_t i = 0; i < ho * wo; ++i) {
    if (far_outside(gx[i]) || far_outside(gy[i])) continue;
    const Tap t = make_tap(gx[i], gy[i], h, w);
    const long xs[2] = {t.x0, t.x0 + 1};
    const long ys[2] = {t.y0, t.y0 + 1};
    const double wxs[2] = {1.0 - t.wx1, t.wx1};
    const double wys[2] = {1.0 - t.wy1, t.wy1};
    double dpx = 0.0, dpy = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = grad_out[ch * ho * wo + i];
      if (g == 0.0) continue;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          if (inside(ys[a], h) && inside(xs[b], w)) {
            grads.input[ch * h * w + static_cast<std::size_t>(ys[a]) * w +
                        static_cast<std::size_t>(xs[b])] += g * wys[a] * wxs[b];
          }
        }
      }
      const double p00 = pixel(ch, ys[0], xs[0]), p01 = pixel(ch, ys[0], xs[1]);
      const double p10 = pixel(ch, ys[1], xs[0]), p11 = pixel(ch, ys[1], xs[1]);
      dpx += g * (wys[0] * (p01 - p00) + wys[1] * (p11 - p10));
      dpy += g * (wxs[0] * (p10 - p00) + wxs[1] * (p11 - p01));
    }
    grads.gx[i] = dpx * t.sx;
    grads.gy[i] = dpy * t.sy;
  }
  return grads;
}

}  // namespace hcanet
