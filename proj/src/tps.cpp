#include "hcanet/tps.hpp"

#include <cmath>

namespace hcanet::tps {

Tensor identity_grid_x(std::size_t height, std::size_t width) {
  Tensor g({height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      g.at(y, x) = width > 1 ? -1.0 + 2.0 * static_cast<double>(x) / static_cast<double>(width - 1) : 0.0;
  return g;
}

Tensor identity_grid_y(std::size_t height, std::size_t width) {
  Tensor g({height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      g.at(y, x) = height > 1 ? -1.0 + 2.0 * static_cast<double>(y) / static_cast<double>(height - 1) : 0.0;
  return g;
}

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

Tensor solve(Tensor a, Tensor rhs) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1) || rhs.rank() != 2 || rhs.dim(0) != a.dim(0)) {
    throw ShapeError("solve: expected n×n system and n×m right-hand side, got " +
                     to_string(a.shape()) + " and " + to_string(rhs.shape()));
  }
  const std::size_t n = a.dim(0), m = rhs.dim(1);
  double scale = 0.0;
  for (double v : a.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
    }
    if (std::abs(a.at(pivot, col)) <= 1e-13 * scale) {
      throw NumericError("solve: singular system (column " + std::to_string(col) + ")");
    }
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a.at(col, j), a.at(pivot, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(rhs.at(col, j), rhs.at(pivot, j));
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a.at(r, col) / a.at(col, col);
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) a.at(r, j) -= f * a.at(col, j);
      for (std::size_t j = 0; j < m; ++j) rhs.at(r, j) -= f * rhs.at(col, j);
    }
  }
  for (std::size_t col = n; col-- > 0;) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = rhs.at(col, j);
      for (std::size_t k = col + 1; k < n; ++k) s -= a.at(col, k) * rhs.at(k, j);
      rhs.at(col, j) = s / a.at(col, col);
    }
  }
  return rhs;
}

TpsBasis::TpsBasis(std::size_t grid_side, std::size_t height, std::size_t width)
    : k_(grid_side), h_(height), w_(width) {
  if (k_ < 2) throw ArgumentError("tps: grid side must be >= 2");
  if (h_ < 2 || w_ < 2) throw ArgumentError("tps: output grid must be at least 2×2");
  const std::size_t n = k_ * k_;

  sources_ = Tensor({n, 2});
  for (std::size_t r = 0; r < k_; ++r) {
    for (std::size_t c = 0; c < k_; ++c) {
      sources_.at(r * k_ + c, 0) = -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(k_ - 1);
      sources_.at(r * k_ + c, 1) = -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(k_ - 1);
    }
  }

  // [K + ridge·I  P; Pᵀ 0] [w; a] = [t; 0]. Solving against [I; 0] yields the operator that maps
  // any target vector t to its spline coefficients.
  Tensor system({n + 3, n + 3});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = sources_.at(i, 0) - sources_.at(j, 0);
      const double dy = sources_.at(i, 1) - sources_.at(j, 1);
      system.at(i, j) = tps_kernel(dx * dx + dy * dy) + (i == j ? kRidge : 0.0);
    }
    const double p[3] = {1.0, sources_.at(i, 0), sources_.at(i, 1)};
    for (std::size_t a = 0; a < 3; ++a) {
      system.at(i, n + a) = p[a];
      system.at(n + a, i) = p[a];
    }
  }
  Tensor rhs({n + 3, n});
  for (std::size_t i = 0; i < n; ++i) rhs.at(i, i) = 1.0;
  const Tensor coeff = solve(std::move(system), std::move(rhs));  // (n+3)×n

  identity_x_ = identity_grid_x(h_, w_);
  identity_y_ = identity_grid_y(h_, w_);
  Tensor features({h_ * w_, n + 3});
  for (std::size_t pix = 0; pix < h_ * w_; ++pix) {
    const double x = identity_x_[pix], y = identity_y_[pix];
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = x - sources_.at(j, 0);
      const double dy = y - sources_.at(j, 1);
      features.at(pix, j) = tps_kernel(dx * dx + dy * dy);
    }
    features.at(pix, n) = 1.0;
    features.at(pix, n + 1) = x;
    features.at(pix, n + 2) = y;
  }
  matrix_ = hcanet::matmul(features, coeff);
}

Grid tps_grid(const Var& theta, const TpsBasis& basis) {
  const std::size_t n = basis.points();
  if (theta.shape() != Shape{2 * n}) {
    throw ShapeError("tps_grid: theta " + to_string(theta.shape()) + " does not match a " +
                     std::to_string(basis.grid_side()) + "×" + std::to_string(basis.grid_side()) +
                     " lattice (expected [" + std::to_string(2 * n) + "])");
  }
  const Var b = ad::constant(basis.matrix());
  const Shape hw{basis.height(), basis.width()};
  auto axis = [&](std::size_t begin, const Tensor& identity) {
    Var offsets = ad::reshape(ad::slice_channels(theta, begin, n), {n, 1});
    Var moved = ad::reshape(ad::matmul(b, offsets), hw);
    return ad::add(ad::constant(identity), moved);
  };
  return {axis(0, basis.identity_x()), axis(n, basis.identity_y())};
}

Var warp(const Var& image, const Grid& grid) { return ad::grid_sample(image, grid.gx, grid.gy); }

Var warp(const Var& image, const Var& theta, const TpsBasis& basis) {
  return warp(image, tps_grid(theta, basis));
}

}  // namespace hcanet::tps
