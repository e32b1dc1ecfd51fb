#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcanet/nn.hpp"
#include "hcanet/tps.hpp"

namespace hcanet::losses {

using ad::Var;

struct LossWeights {
  double lambda_1 = 1.0;     // image L1
  double lambda_2 = 1.0;     // warped-mask L1 (B4 term)
  double lambda_reg = 1.0;   // grid regularization
  double lambda_vgg = 1.0;   // perceptual
  double lambda_mask = 1.0;  // composition-mask L1

  /// Throws ArgumentError unless every weight is finite and non-negative.
  void validate() const;
};

/// Mean absolute difference.
Var l1_loss(const Var& a, const Var& b);

/// Sum over interior grid positions of the absolute differences to the four axis neighbours,
/// applied to gx and gy (or gx alone when `gx_only`). Requires H, W >= 3.
Var grid_regularization(const tps::Grid& grid, bool gx_only = false);

/// Fixed, never-trained three-level convolutional feature pyramid (8/16/32 channels,
/// stride 2 between levels) standing in for a pretrained perceptual backbone.
class PerceptualNet {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5eed;

  explicit PerceptualNet(std::uint64_t seed = kDefaultSeed);
  /// Uses externally supplied weights (HCAC checkpoint with the same names as `spec()`).
  static PerceptualNet from_checkpoint(const std::string& path);

  static nn::NetSpec spec();
  std::vector<Var> features(const Var& image) const;
  const nn::ModelParams& params() const noexcept { return params_; }

 private:
  explicit PerceptualNet(nn::ModelParams params);
  nn::ModelParams params_;
};

/// Σ over pyramid levels of the L1 distance between feature maps.
Var perceptual_loss(const Var& a, const Var& b, const PerceptualNet& net);

/// I_o = M_o ⊙ I_ĉ + (1 − M_o) ⊙ I_R with the 1-channel mask broadcast over image channels.
Var compose_output(const Var& m_o, const Var& warped, const Var& rendered);

struct MatchingTerms {
  Var total;
  Var l1;    // L1(I_ĉ, I_ct)
  Var reg;   // grid regularization
  Var mask;  // L1(I_ĉm, I_tm); undefined when the term is disabled
};

MatchingTerms matching_loss(const Var& warped_c, const Var& gt_ct, const tps::Grid& grid,
                            const Var& warped_cm, const Var& gt_tm, const LossWeights& w,
                            bool use_mask_term, bool reg_gx_only = false);

struct TryonTerms {
  Var total;
  Var l1;    // L1(I_o, I_GT)
  Var vgg;   // perceptual
  Var mask;  // L1(M_o, I_tm)
};

TryonTerms tryon_loss(const Var& i_o, const Var& i_gt, const Var& m_o, const Var& i_tm,
                      const PerceptualNet& net, const LossWeights& w);

}  // namespace hcanet::losses
