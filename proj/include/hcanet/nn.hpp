#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hcanet/autodiff.hpp"

namespace hcanet::nn {

using ad::Var;

enum class LayerKind { kConv, kRelu, kLeakyRelu, kTanh, kSigmoid, kUpsampleNearest };

struct ConvSpec {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 3;
  int stride = 1;
  int padding = 1;
};

/// One step of a sequential stack. Convolutions are named `<prefix>.conv<i>` in order.
struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  ConvSpec conv{};
};

enum class Init { kKaimingUniform, kZero };

/// A tensor the model owns, declared before initialization.
struct WeightSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  Init init = Init::kKaimingUniform;
};
using NetSpec = std::vector<WeightSpec>;

/// Ordered, name-addressed set of model tensors. Trainable entries are parameters; buffers
/// (e.g. metadata) are stored alongside but never optimized.
class ModelParams {
 public:
  using Entry = std::pair<std::string, Var>;

  Var& add_parameter(std::string name, Tensor value);
  Var& add_buffer(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  const Var& at(std::string_view name) const;
  Var& at(std::string_view name);

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Trainable parameters whose name starts with `prefix`, in insertion order.
  std::vector<Var> parameters(std::string_view prefix = {}) const;
  std::size_t parameter_count(std::string_view prefix = {}) const;
  void zero_grad();
  /// Deep copy with fresh graph nodes.
  ModelParams clone() const;

 private:
  Var& insert(std::string name, Var v);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Kaiming-uniform (bound √(6/fan_in)) for weights, zeros for biases; deterministic per seed.
ModelParams init_params(const NetSpec& spec, std::uint64_t seed);
/// Initializes `spec` into an existing parameter set, drawing from the given seed.
void init_into(ModelParams& params, const NetSpec& spec, std::uint64_t seed);

void append_conv(NetSpec& spec, const std::string& name, const ConvSpec& conv,
                 Init init = Init::kKaimingUniform);
void append_linear(NetSpec& spec, const std::string& name, std::size_t in, std::size_t out,
                   Init init = Init::kKaimingUniform);
NetSpec layers_spec(const std::string& prefix, const std::vector<LayerSpec>& layers);

Var apply_conv(const ModelParams& params, const std::string& name, const Var& x, int stride,
               int padding);
Var apply_linear(const ModelParams& params, const std::string& name, const Var& x);
Var apply_layers(const ModelParams& params, const std::string& prefix,
                 const std::vector<LayerSpec>& layers, Var x);

// ---- downsampling feature extractor ---------------------------------------------------

/// Two stride-2 then two stride-1 3×3 convolutions, each followed by leaky ReLU(0.2).
std::vector<LayerSpec> extractor_layers(std::size_t in_ch, std::size_t features);
NetSpec extractor_spec(const std::string& prefix, std::size_t in_ch, std::size_t features);
/// x: C×H×W with H, W divisible by 4 → F×H/4×W/4.
Var extractor_forward(const ModelParams& params, const std::string& prefix, const Var& x);

// ---- TPS parameter regressor -----------------------------------------------------------

struct RegressorShape {
  std::size_t features = 0;
  std::size_t height = 0;  // input feature-map size
  std::size_t width = 0;
  std::size_t grid_side = 5;
};
/// Two stride-2 convolutions, a linear head of size 2k², then tanh. The head is
/// zero-initialized by default so a fresh model starts from the identity warp.
NetSpec regressor_spec(const std::string& prefix, const RegressorShape& shape,
                       Init head_init = Init::kZero);
Var regressor_forward(const ModelParams& params, const std::string& prefix, const Var& x);

// ---- try-on U-Net ----------------------------------------------------------------------

struct UnetShape {
  std::size_t in_ch = 0;
  std::size_t base = 64;
  std::size_t depth = 4;
};
NetSpec unet_spec(const std::string& prefix, const UnetShape& shape);
/// Returns 4×H×W: channels 0–2 the rendered person in [0,1] ((tanh+1)/2), channel 3 the
/// composition mask (sigmoid). `skip_scale` multiplies every skip connection (1 = normal).
Var unet_forward(const ModelParams& params, const std::string& prefix, const UnetShape& shape,
                 const Var& x, double skip_scale = 1.0);

// ---- checkpoints: "HCAC", u32 count, then per entry u16 name length, name, HCAT tensor ----

void write_checkpoint(std::ostream& out, const ModelParams& params);
/// Entries named `meta.*` are restored as buffers, everything else as parameters.
ModelParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace hcanet::nn
