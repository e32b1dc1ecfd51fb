#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hcanet/tensor.hpp"

namespace hcanet::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Propagates `self.grad` into the grads of `self.parents`.
using BackwardFn = std::function<void(Node& self)>;

/// One value in the eagerly recorded computation graph.
struct Node {
  Tensor value;
  Tensor grad;
  std::string op;
  std::vector<NodePtr> parents;
  BackwardFn backward;
  bool trainable = false;

  /// grad += g, allocating grad on first use.
  void accumulate(const Tensor& g);
  void ensure_grad();
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Mutable access for optimizers and finite-difference probes. Leaves only.
  Tensor& mutable_value();
  const Tensor& grad() const;
  const Shape& shape() const { return node_->value.shape(); }
  bool trainable() const { return node_->trainable; }
  const NodePtr& node() const { return node_; }
  void zero_grad();

 private:
  NodePtr node_;
};

/// Non-trainable leaf.
Var constant(Tensor value);
/// Trainable leaf.
Var parameter(Tensor value);

/// Records an op result. With gradient recording disabled the parents and closure are dropped.
Var make_op(Tensor value, std::string op, std::vector<Var> parents, BackwardFn fn);

bool grad_enabled() noexcept;

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- differentiable operations -------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var softmax_rows(const Var& a);
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);
Var grid_sample(const Var& x, const Var& gx, const Var& gy);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// 1 - a
Var one_minus(const Var& a);
Var abs(const Var& a);

Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, std::vector<std::size_t> axes);
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& a, std::size_t begin, std::size_t count);
Var upsample_nearest(const Var& x, std::size_t factor);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope = 0.2);
Var tanh(const Var& x);
Var sigmoid(const Var& x);

Var sum(const Var& a);
Var mean(const Var& a);
Var abs_sum(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

/// Reverse sweep from a one-element loss with seed gradient 1. Interior node gradients are
/// recomputed on each call; leaf gradients accumulate across calls until zeroed.
void backward(const Var& loss);

struct GradCheckOptions {
  double step = 1e-5;
  /// Probe at most this many elements per parameter (0 = all), chosen by a seeded shuffle.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
  /// Record the branch taken by every piecewise op (ReLU side, |x| sign, bilinear cell) during
  /// the analytic pass and replay it in the perturbed evaluations. The differenced function is
  /// then smooth, so kinks within the step cannot corrupt the quotient. f must be deterministic.
  bool pin_branches = false;
  /// Combine steps h and h/2 as (4·D(h/2) − D(h))/3, cancelling the h² truncation term.
  bool richardson = false;
};

/// Largest relative error |g_a - g_n| / (|g_a| + |g_n| + 1e-8) between analytic gradients and
/// central differences of `f` over the probed parameter elements. `f` must rebuild its graph
/// from the current parameter values on every call.
double grad_check(const std::function<Var()>& f, std::span<const Var> params,
                  const GradCheckOptions& options = {});

}  // namespace hcanet::ad
