#include "hcanet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_set>

#include "hcanet/branch_tape.hpp"

namespace hcanet::ad {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

void Node::ensure_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
}

void Node::accumulate(const Tensor& g) {
  ensure_grad();
  add_inplace(grad, g);
}

Tensor& Var::mutable_value() {
  if (!node_->parents.empty()) throw ArgumentError("mutable_value() on a non-leaf node");
  return node_->value;
}

const Tensor& Var::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Var::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->grad.values().begin(), node_->grad.values().end(), 0.0);
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "constant";
  return Var(std::move(n));
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "parameter";
  n->trainable = true;
  return Var(std::move(n));
}

Var make_op(Tensor value, std::string op, std::vector<Var> parents, BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = std::move(op);
  if (g_grad_enabled) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(fn);
  }
  return Var(std::move(n));
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  return make_op(hcanet::matmul(a.value(), b.value()), "matmul", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    pa.accumulate(matmul_nt(self.grad, pb.value));
    pb.accumulate(matmul_tn(pa.value, self.grad));
  });
}

Var softmax_rows(const Var& a) {
  return make_op(hcanet::softmax_rows(a.value()), "softmax_rows", {a}, [](Node& self) {
    self.parents[0]->accumulate(softmax_rows_backward(self.value, self.grad));
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  const Tensor no_bias;
  Tensor out = hcanet::conv2d(x.value(), weight.value(), bias.defined() ? bias.value() : no_bias,
                              stride, padding);
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op(std::move(out), "conv2d", std::move(parents), [stride, padding](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Conv2dGrads g = conv2d_backward(px.value, pw.value, self.grad, stride, padding);
    px.accumulate(g.input);
    pw.accumulate(g.weight);
    if (self.parents.size() > 2) self.parents[2]->accumulate(g.bias);
  });
}

Var grid_sample(const Var& x, const Var& gx, const Var& gy) {
  return make_op(hcanet::grid_sample(x.value(), gx.value(), gy.value()), "grid_sample",
                 {x, gx, gy}, [](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pgx = *self.parents[1];
                   Node& pgy = *self.parents[2];
                   GridSampleGrads g =
                       grid_sample_backward(px.value, pgx.value, pgy.value, self.grad);
                   px.accumulate(g.input);
                   pgx.accumulate(g.gx);
                   pgy.accumulate(g.gy);
                 });
}

namespace {

// Gradient for an operand that may have been broadcast as a scalar.
Tensor reduce_to(const Tensor& g, const Tensor& operand) {
  if (operand.numel() == 1 && g.numel() != 1) {
    return Tensor(operand.shape(), std::vector<double>{reduce(Reduction::kSum, g)});
  }
  return g;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return make_op(hcanet::add(a.value(), b.value()), "add", {a, b}, [](Node& self) {
    self.parents[0]->accumulate(reduce_to(self.grad, self.parents[0]->value));
    self.parents[1]->accumulate(reduce_to(self.grad, self.parents[1]->value));
  });
}

Var sub(const Var& a, const Var& b) {
  return make_op(hcanet::sub(a.value(), b.value()), "sub", {a, b}, [](Node& self) {
    self.parents[0]->accumulate(reduce_to(self.grad, self.parents[0]->value));
    self.parents[1]->accumulate(reduce_to(hcanet::scale(self.grad, -1.0), self.parents[1]->value));
  });
}

Var mul(const Var& a, const Var& b) {
  return make_op(hcanet::mul(a.value(), b.value()), "mul", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    pa.accumulate(reduce_to(hcanet::mul(self.grad, pb.value), pa.value));
    pb.accumulate(reduce_to(hcanet::mul(self.grad, pa.value), pb.value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(hcanet::scale(a.value(), s), "scale", {a},
                 [s](Node& self) { self.parents[0]->accumulate(hcanet::scale(self.grad, s)); });
}

Var add_scalar(const Var& a, double s) {
  return make_op(hcanet::add_scalar(a.value(), s), "add_scalar", {a},
                 [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Var one_minus(const Var& a) { return add_scalar(scale(a, -1.0), 1.0); }

namespace {

template <typename Fwd, typename Deriv>
Var unary(const Var& x, const char* name, Fwd fwd, Deriv deriv) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = fwd(v);
  return make_op(std::move(out), name, {x}, [deriv](Node& self) {
    Node& px = *self.parents[0];
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= deriv(px.value[i], self.value[i]);
    px.accumulate(g);
  });
}

}  // namespace

// Forward passes route each side choice through pinned_branch so a BranchTape can freeze it.
Var abs(const Var& a) {
  return unary(
      a, "abs",
      [](double v) { return static_cast<double>(pinned_branch(v > 0.0 ? 1 : (v < 0.0 ? -1 : 0))) * v; },
      [](double in, double) { return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0); });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](double v) { return pinned_branch(v > 0.0) ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, "leaky_relu", [slope](double v) { return pinned_branch(v > 0.0) ? v : slope * v; },
      [slope](double in, double) { return in > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double out) { return out * (1.0 - out); });
}

Var reshape(const Var& a, Shape shape) {
  return make_op(hcanet::reshape(a.value(), std::move(shape)), "reshape", {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    pa.accumulate(hcanet::reshape(self.grad, pa.value.shape()));
  });
}

Var permute(const Var& a, std::vector<std::size_t> axes) {
  Tensor out = hcanet::permute(a.value(), axes);
  std::vector<std::size_t> inverse(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = i;
  return make_op(std::move(out), "permute", {a}, [inverse](Node& self) {
    self.parents[0]->accumulate(hcanet::permute(self.grad, inverse));
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  return make_op(hcanet::concat_channels(values), "concat_channels", parts, [](Node& self) {
    std::size_t begin = 0;
    for (auto& p : self.parents) {
      const std::size_t count = p->value.dim(0);
      p->accumulate(hcanet::slice_channels(self.grad, begin, count));
      begin += count;
    }
  });
}

Var slice_channels(const Var& a, std::size_t begin, std::size_t count) {
  return make_op(hcanet::slice_channels(a.value(), begin, count), "slice_channels", {a},
                 [begin, count](Node& self) {
                   Node& pa = *self.parents[0];
                   pa.ensure_grad();
                   const std::size_t plane = pa.value.numel() / pa.value.dim(0);
                   double* dst = pa.grad.data() + begin * plane;
                   const double* src = self.grad.data();
                   for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                 });
}

Var upsample_nearest(const Var& x, std::size_t factor) {
  return make_op(hcanet::upsample_nearest(x.value(), factor), "upsample_nearest", {x},
                 [factor](Node& self) {
                   self.parents[0]->accumulate(upsample_nearest_backward(self.grad, factor));
                 });
}

Var sum(const Var& a) {
  return make_op(Tensor::scalar(reduce(Reduction::kSum, a.value())), "sum", {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    pa.accumulate(Tensor(pa.value.shape(), self.grad[0]));
  });
}

Var mean(const Var& a) {
  return make_op(Tensor::scalar(reduce(Reduction::kMean, a.value())), "mean", {a},
                 [](Node& self) {
                   Node& pa = *self.parents[0];
                   pa.accumulate(Tensor(pa.value.shape(),
                                        self.grad[0] / static_cast<double>(pa.value.numel())));
                 });
}

Var abs_sum(const Var& a) {
  return make_op(Tensor::scalar(reduce(Reduction::kAbsSum, a.value())), "abs_sum", {a},
                 [](Node& self) {
                   Node& pa = *self.parents[0];
                   Tensor g(pa.value.shape());
                   const double s = self.grad[0];
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     const double v = pa.value[i];
                     g[i] = v > 0.0 ? s : (v < 0.0 ? -s : 0.0);
                   }
                   pa.accumulate(g);
                 });
}

// ---------------------------------------------------------------------------

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw ArgumentError("backward: loss must be a one-element tensor");
  }
  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->parents.empty()) {
      n->grad = Tensor(n->value.shape());
    } else {
      n->ensure_grad();
    }
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

double grad_check(const std::function<Var()>& f, std::span<const Var> params,
                  const GradCheckOptions& options) {
  for (Var p : params) p.zero_grad();
  BranchTape tape;
  {
    BranchTape::Scope record(tape, options.pin_branches ? BranchTape::Mode::kRecord
                                                        : BranchTape::Mode::kOff);
    backward(f());
  }

  auto evaluate = [&] {
    NoGradGuard guard;
    BranchTape::Scope replay(tape, options.pin_branches ? BranchTape::Mode::kReplay
                                                        : BranchTape::Mode::kOff);
    const double v = f().value().item();
    if (options.pin_branches && tape.consumed() != tape.size()) {
      throw ArgumentError("grad_check: f took a different path than when branches were recorded");
    }
    return v;
  };
  auto central = [&](Tensor& value, std::size_t i, double h) {
    const double orig = value[i];
    value[i] = orig + h;
    const double up = evaluate();
    value[i] = orig - h;
    const double down = evaluate();
    value[i] = orig;
    return (up - down) / (2.0 * h);
  };

  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (Var p : params) {
    const Tensor analytic = p.grad();
    Tensor& value = p.mutable_value();
    std::vector<std::size_t> idx(value.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_elements_per_param && idx.size() > options.max_elements_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_elements_per_param);
    }
    for (std::size_t i : idx) {
      double numeric = central(value, i, options.step);
      if (options.richardson) numeric = (4.0 * central(value, i, 0.5 * options.step) - numeric) / 3.0;
      const double err =
          std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace hcanet::ad
