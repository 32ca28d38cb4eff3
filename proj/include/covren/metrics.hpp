// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/image.hpp"

#include <span>

namespace covren {

/// 10 log10(1 / MSE) over every pixel and channel of images in [0, 1].
/// Identical images give +infinity. Throws ContractError on shape mismatch.
double psnr(const Image& prediction, const Image& reference);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully-contained windows, averaged over channels.
/// Throws ContractError when the images are smaller than the window.
double ssim(const Image& prediction, const Image& reference, const SsimConfig& config = {});

struct MetricSummary {
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Per-image metrics averaged over a set of pairs.
MetricSummary mean_metrics(std::span<const Image> predictions, std::span<const Image> references);

}  // namespace covren
