#pragma once

#include "hcanet/tensor.hpp"

namespace hcanet::metrics {

/// Intersection over union of `a > threshold` and `b > threshold`; 1 when both are empty.
double iou(const Tensor& a, const Tensor& b, double threshold = 0.5);

/// Mean structural similarity over every valid 11×11 Gaussian window (σ = 1.5), with
/// C1 = 0.01² and C2 = 0.03², averaged over channels. Inputs C×H×W with H, W ≥ 11.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace hcanet::metrics
