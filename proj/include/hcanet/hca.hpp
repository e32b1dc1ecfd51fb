#pragma once

#include <string>
#include <vector>

#include "hcanet/nn.hpp"

namespace hcanet::hca {

using ad::Var;

/// Features of the pose heatmap, body shape and reserved-region image. All F×h×w.
struct PersonFeatures {
  Var x_p1;
  Var x_p2;
  Var x_p3;
};

/// Optional sink for the row-stochastic n×n correlation matrices produced during a forward
/// pass, in evaluation order (X_pp, then X_cp, then X_pc).
struct AttentionTrace {
  std::vector<Tensor> matrices;
};

/// Parameters of one block, all 1×1 convolutions:
///   <prefix>.person.{proj1,proj2,proj3}  F→F   (value, query, key of the person attention)
///   <prefix>.person.fuse                 4F→F
///   <prefix>.cross.{p1,p2,p3,c1,c2,c3}   F→F
nn::NetSpec hca_spec(const std::string& prefix, std::size_t features);

/// Cross-attention among the three person representations followed by fusion with the
/// original features. Output F×h×w.
Var person_cross_attention(const PersonFeatures& p, const nn::ModelParams& params,
                           const std::string& prefix, AttentionTrace* trace = nullptr);

/// Bidirectional person↔clothing attention. Person queries attend over clothing keys and
/// aggregate person values; clothing queries attend over person keys and aggregate clothing
/// values. The two results are summed.
Var cross_attention_pc(const Var& p_hat, const Var& c, const nn::ModelParams& params,
                       const std::string& prefix, AttentionTrace* trace = nullptr);

/// person_cross_attention followed by cross_attention_pc.
Var hca_forward(const PersonFeatures& p, const Var& c, const nn::ModelParams& params,
                const std::string& prefix, AttentionTrace* trace = nullptr);

/// Writes each traced matrix as an HCAT file `<dir>/attention_<i>.hcat`.
void dump_trace(const AttentionTrace& trace, const std::string& dir);

}  // namespace hcanet::hca
