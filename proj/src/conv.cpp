#include <algorithm>

#include "hcanet/tensor.hpp"

namespace hcanet {

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, h_out, w_out;
  long stride, pad;
};

ConvGeometry check_conv(const Tensor& x, const Tensor& weight, int stride, int padding) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be C×H×W, got " + to_string(x.shape()));
  if (weight.rank() != 4) {
    throw ShapeError("conv2d: weight must be C_out×C_in×k×k, got " + to_string(weight.shape()));
  }
  if (weight.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k || k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd side, got " + to_string(weight.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  const long hp = static_cast<long>(x.dim(1)) + 2L * padding - static_cast<long>(k);
  const long wp = static_cast<long>(x.dim(2)) + 2L * padding - static_cast<long>(k);
  if (hp < 0 || wp < 0) {
    throw ShapeError("conv2d: non-positive output size for input " + to_string(x.shape()) +
                     " and kernel " + std::to_string(k));
  }
  return {x.dim(0),
          x.dim(1),
          x.dim(2),
          weight.dim(0),
          k,
          static_cast<std::size_t>(hp / stride + 1),
          static_cast<std::size_t>(wp / stride + 1),
          stride,
          padding};
}

// Range of output columns [lo, hi) whose tap at kernel column kx lands inside the input.
inline void valid_cols(const ConvGeometry& g, long kx, std::size_t& lo, std::size_t& hi) {
  const long off = kx - g.pad;
  long first = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  long last = (static_cast<long>(g.w) - 1 - off);
  last = last < 0 ? -1 : last / g.stride;
  first = std::max(first, 0L);
  last = std::min(last, static_cast<long>(g.w_out) - 1);
  lo = static_cast<std::size_t>(first);
  hi = last < first ? lo : static_cast<std::size_t>(last + 1);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const ConvGeometry g = check_conv(x, weight, stride, padding);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != g.c_out)) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                     std::to_string(g.c_out) + " output channels");
  }
  Tensor out({g.c_out, g.h_out, g.w_out});
  const std::size_t plane_out = g.h_out * g.w_out;
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double* o = out.data() + co * plane_out;
    if (!bias.empty()) std::fill(o, o + plane_out, bias[co]);
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const double* xin = x.data() + ci * g.h * g.w;
      const double* wk = weight.data() + (co * g.c_in + ci) * g.k * g.k;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const double wv = wk[ky * g.k + kx];
          if (wv == 0.0) continue;
          std::size_t lo, hi;
          valid_cols(g, static_cast<long>(kx), lo, hi);
          if (lo >= hi) continue;
          for (std::size_t oy = 0; oy < g.h_out; ++oy) {
            const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const double* xrow = xin + static_cast<std::size_t>(iy) * g.w;
            double* orow = o + oy * g.w_out;
            const long base = static_cast<long>(kx) - g.pad;
            if (g.stride == 1) {
              const double* src = xrow + base;
              for (std::size_t ox = lo; ox < hi; ++ox) orow[ox] += wv * src[ox];
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) {
                orow[ox] += wv * xrow[static_cast<long>(ox) * g.stride + base];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                            int stride, int padding) {
  const ConvGeometry g = check_conv(x, weight, stride, padding);
  if (grad_out.shape() != Shape{g.c_out, g.h_out, g.w_out}) {
    throw ShapeError("conv2d_backward: gradient shape " + to_string(grad_out.shape()) +
                     " does not match output");
  }
  Conv2dGrads grads{Tensor(x.shape()), Tensor(weight.shape()), Tensor({g.c_out})};
  const std::size_t plane_out = g.h_out * g.w_out;
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const double* go = grad_out.data() + co * plane_out;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane_out; ++i) bsum += go[i];
    grads.bias[co] = bsum;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const double* xin = x.data() + ci * g.h * g.w;
      double* gxin = grads.input.data() + ci * g.h * g.w;
      const double* wk = weight.data() + (co * g.c_in + ci) * g.k * g.k;
      double* gwk = grads.weight.data() + (co * g.c_in + ci) * g.k * g.k;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const double wv = wk[ky * g.k + kx];
          std::size_t lo, hi;
          valid_cols(g, static_cast<long>(kx), lo, hi);
          if (lo >= hi) continue;
          double wacc = 0.0;
          const long base = static_cast<long>(kx) - g.pad;
          for (std::size_t oy = 0; oy < g.h_out; ++oy) {
            const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const double* xrow = xin + static_cast<std::size_t>(iy) * g.w;
            double* gxrow = gxin + static_cast<std::size_t>(iy) * g.w;
            const double* grow = go + oy * g.w_out;
            if (g.stride == 1) {
              const double* src = xrow + base;
              double* dst = gxrow + base;
              for (std::size_t ox = lo; ox < hi; ++ox) {
                wacc += grow[ox] * src[ox];
                dst[ox] += wv * grow[ox];
              }
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) {
                const long ix = static_cast<long>(ox) * g.stride + base;
                wacc += grow[ox] * xrow[ix];
                gxrow[ix] += wv * grow[ox];
              }
            }
          }
          gwk[ky * g.k + kx] += wacc;
        }
      }
    }
  }
  return grads;
}

}  // namespace hcanet
