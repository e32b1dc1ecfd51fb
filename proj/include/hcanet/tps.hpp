#pragma once

#include <cstddef>

#include "hcanet/autodiff.hpp"

namespace hcanet::tps {

using ad::Var;

/// Normalized sampling coordinates (each H×W) telling every output pixel where to read from.
struct Grid {
  Var gx;
  Var gy;
};

/// Identity sampling coordinates: x runs -1..1 across columns, y runs -1..1 down rows.
Tensor identity_grid_x(std::size_t height, std::size_t width);
Tensor identity_grid_y(std::size_t height, std::size_t width);

/// Precomputed thin-plate-spline interpolation operator for a k×k control lattice spanning
/// [-1,1]² and an H×W output grid. Because the TPS solution is linear in the target control
/// coordinates, each grid axis is `matrix() · targets_axis` (matrix is (H·W)×k²).
class TpsBasis {
 public:
  static constexpr double kRidge = 1e-6;

  TpsBasis(std::size_t grid_side, std::size_t height, std::size_t width);

  std::size_t grid_side() const noexcept { return k_; }
  std::size_t points() const noexcept { return k_ * k_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }

  const Tensor& matrix() const noexcept { return matrix_; }
  /// Source lattice, k²×2, row-major over (row, column) with columns (x, y).
  const Tensor& sources() const noexcept { return sources_; }
  const Tensor& identity_x() const noexcept { return identity_x_; }
  const Tensor& identity_y() const noexcept { return identity_y_; }

 private:
  std::size_t k_, h_, w_;
  Tensor sources_;
  Tensor matrix_;
  Tensor identity_x_, identity_y_;
};

/// Radial kernel r²·log(r²) with U(0) = 0.
double tps_kernel(double r2);

/// θ has 2k² entries: Δx for every control point (row-major), then Δy. Targets are the source
/// lattice plus θ, so θ = 0 is the identity warp. The grid is computed as identity + B·θ.
Grid tps_grid(const Var& theta, const TpsBasis& basis);

Var warp(const Var& image, const Grid& grid);
Var warp(const Var& image, const Var& theta, const TpsBasis& basis);

/// Dense solve of a square system with multiple right-hand sides (partial pivoting).
/// Throws NumericError for a numerically singular matrix.
Tensor solve(Tensor a, Tensor rhs);

}  // namespace hcanet::tps
