#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hcanet/data.hpp"
#include "hcanet/hca.hpp"
#include "hcanet/losses.hpp"
#include "hcanet/tps.hpp"

namespace hcanet::pipeline {

using ad::Var;
using data::Sample;

/// Architecture hyperparameters. H and W must be divisible by 4 and by 2^unet_depth.
struct ModelConfig {
  std::size_t height = 256;
  std::size_t width = 192;
  std::size_t tps_k = 5;
  std::size_t features = 64;
  std::size_t unet_depth = 4;
  std::size_t unet_channels = 64;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class TrainMode { kStage1, kStage2, kJoint };
TrainMode parse_mode(const std::string& name);
std::string mode_name(TrainMode mode);

struct TrainConfig {
  losses::LossWeights weights;
  AdamConfig adam;
  std::size_t steps = 1000;
  std::size_t batch = 4;
  double decay_start = 0.5;  // fraction of `steps` after which lr decays linearly to 0
  ModelConfig model;
  std::uint64_t seed = 0;
  bool use_mask_term = true;  // warped-mask L1 in the matching loss
  bool reg_gx_only = false;
  std::uint64_t perceptual_seed = losses::PerceptualNet::kDefaultSeed;
  std::string perceptual_weights;  // optional HCAC file overriding the seeded perceptual net
  std::size_t checkpoint_every = 0;
  std::string checkpoint_prefix;  // checkpoints go to <prefix>.step<N>.hcac

  void validate() const;
};

/// Learning rate for 0-based step `step`: constant, then linear decay reaching 0 at `steps`.
double learning_rate(const TrainConfig& cfg, std::size_t step);

/// The full two-stage model: parameters, the precomputed TPS operator and the architecture.
/// Parameter names start with `stage1.` or `stage2.`; `meta.model_config` records the
/// architecture so checkpoints are self-describing.
class TryOnModel {
 public:
  TryOnModel(const ModelConfig& config, std::uint64_t seed);
  /// Rebuilds a model from a checkpoint's parameters (architecture read from the metadata).
  explicit TryOnModel(nn::ModelParams params);

  static nn::NetSpec spec(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  const tps::TpsBasis& basis() const noexcept { return basis_; }
  const nn::ModelParams& params() const noexcept { return params_; }
  nn::ModelParams& params() noexcept { return params_; }
  nn::UnetShape unet_shape() const;

  void save(const std::string& path) const;
  static TryOnModel load(const std::string& path);

 private:
  ModelConfig config_;
  nn::ModelParams params_;
  tps::TpsBasis basis_;
};

struct Stage1Output {
  Var theta;  // 2k² TPS displacements
  tps::Grid grid;
  Var warped_c;   // I_ĉ
  Var warped_cm;  // I_ĉm
};

struct Stage2Output {
  Var m_o;  // composition mask, 1×H×W
  Var i_r;  // rendered person, 3×H×W
  Var i_o;  // final try-on image, 3×H×W
};

Stage1Output stage1_forward(const TryOnModel& model, const Sample& sample,
                            hca::AttentionTrace* trace = nullptr);
Stage2Output stage2_forward(const TryOnModel& model, const Sample& sample, const Var& warped_c,
                            const Var& warped_cm, hca::AttentionTrace* trace = nullptr);

/// Per-parameter first and second moments, indexed like the parameter list they were built for.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update (t ≥ 1) of `params` from their accumulated gradients.
/// Parameters without a gradient are left unchanged.
void adam_step(std::span<const Var> params, AdamState& state, std::size_t t, double lr,
               const AdamConfig& cfg);

struct LossRecord {
  std::size_t step = 0;
  double total = 0.0;
  double l1 = 0.0;
  double reg = 0.0;
  double vgg = 0.0;
  double mask = 0.0;
};

/// `step,loss_total,loss_l1,loss_reg,loss_vgg,loss_mask` header and rows.
std::string history_csv(const std::vector<LossRecord>& history);

using StepCallback = std::function<void(const LossRecord&)>;

/// Adam training over `dataset` in fixed order, batch gradients averaged. stage1 trains the
/// `stage1.` parameters on the matching loss; stage2 trains `stage2.` parameters on the try-on
/// loss with stage I frozen; joint trains everything on their sum. Returns the per-step
/// history (batch means). Throws NumericError naming the step on a non-finite loss.
std::vector<LossRecord> train(TryOnModel& model, const std::vector<Sample>& dataset,
                              const TrainConfig& cfg, TrainMode mode,
                              const StepCallback& on_step = {});

}  // namespace hcanet::pipeline
