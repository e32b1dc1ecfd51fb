#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hcanet/errors.hpp"

namespace hcanet {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. Value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  /// Builds a rank-2 tensor from nested rows (all rows must have equal length).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t c, std::size_t y, std::size_t x);
  double at(std::size_t c, std::size_t y, std::size_t x) const;

  /// The single element of a one-element tensor.
  double item() const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Primitive operations. All are pure; inputs are never modified.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

/// Row-wise softmax of a rank-2 tensor, stabilized by subtracting each row's maximum.
Tensor softmax_rows(const Tensor& a);
/// Vector-Jacobian product of softmax_rows given its output y and upstream gradient.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_out);

/// 2-D cross-correlation with zero padding.
/// x: C_in×H×W, weight: C_out×C_in×k×k, bias: C_out (or empty for no bias).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                            int stride, int padding);

/// Bilinear sampling with zero extension. gx, gy: H_g×W_g normalized coordinates where
/// (-1,-1) is the top-left pixel center and (+1,+1) the bottom-right pixel center.
Tensor grid_sample(const Tensor& x, const Tensor& gx, const Tensor& gy);

struct GridSampleGrads {
  Tensor input;
  Tensor gx;
  Tensor gy;
};
GridSampleGrads grid_sample_backward(const Tensor& x, const Tensor& gx, const Tensor& gy,
                                     const Tensor& grad_out);

enum class BinaryOp { kAdd, kSub, kMul };

/// Pointwise op on equal shapes; a one-element operand broadcasts as a scalar.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
void add_inplace(Tensor& acc, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);

/// Concatenates along axis 0; all trailing dimensions must agree.
Tensor concat_channels(std::span<const Tensor> parts);
/// Channels [begin, begin+count) along axis 0.
Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t count);

/// Nearest-neighbour upsampling of C×H×W by an integer factor.
Tensor upsample_nearest(const Tensor& x, std::size_t factor);
Tensor upsample_nearest_backward(const Tensor& grad_out, std::size_t factor);

/// Sum with a running compensation term; error stays near one rounding regardless of length.
double compensated_sum(std::span<const double> values);

enum class Reduction { kMean, kSum, kAbsSum };
double reduce(Reduction op, const Tensor& a);

// ---------------------------------------------------------------------------
// HCAT raw tensor codec: "HCAT", u32 LE rank, rank × u32 LE dims, f64 LE values.
// ---------------------------------------------------------------------------

void write_hcat(std::ostream& out, const Tensor& t);
/// Reads one tensor. `offset` is the stream position used for error reporting and is
/// advanced by the number of bytes consumed.
Tensor read_hcat(std::istream& in, std::size_t& offset);

}  // namespace hcanet
