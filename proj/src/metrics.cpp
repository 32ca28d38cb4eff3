// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/metrics.hpp"

#include "covren/errors.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace covren {

namespace {

void check_pair(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw ContractError("image shapes differ: " + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                        std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                        std::to_string(b.channels));
  }
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable "valid" filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& prediction, const Image& reference) {
  check_pair(prediction, reference);
  if (prediction.data.empty()) {
    throw ContractError("psnr of empty images");
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < prediction.data.size(); ++i) {
    const double d = static_cast<double>(prediction.data[i]) - reference.data[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(prediction.data.size());
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& prediction, const Image& reference, const SsimConfig& config) {
  check_pair(prediction, reference);
  const int w = prediction.width;
  const int h = prediction.height;
  if (w < config.window || h < config.window) {
    throw ContractError("ssim needs images of at least " + std::to_string(config.window) + "x" +
                        std::to_string(config.window));
  }
  const double c1 = (config.k1) * (config.k1);
  const double c2 = (config.k2) * (config.k2);
  const std::vector<double> kernel = gaussian_kernel(config.window, config.sigma);
  const std::size_t npix = prediction.pixel_count();

  double total = 0.0;
  for (int c = 0; c < prediction.channels; ++c) {
    std::vector<double> x(npix), y(npix), xx(npix), yy(npix), xy(npix);
    for (std::size_t i = 0; i < npix; ++i) {
      x[i] = prediction.data[i * prediction.channels + c];
      y[i] = reference.data[i * reference.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, kernel);
    const auto my = filter_valid(y, w, h, kernel);
    const auto sxx = filter_valid(xx, w, h, kernel);
    const auto syy = filter_valid(yy, w, h, kernel);
    const auto sxy = filter_valid(xy, w, h, kernel);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / prediction.channels;
}

MetricSummary mean_metrics(std::span<const Image> predictions, std::span<const Image> references) {
  if (predictions.size() != references.size() || predictions.empty()) {
    throw ContractError("mean_metrics needs equal, non-empty image sets");
  }
  MetricSummary out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    out.psnr += psnr(predictions[i], references[i]);
    out.ssim += ssim(predictions[i], references[i]);
  }
  out.psnr /= static_cast<double>(predictions.size());
  out.ssim /= static_cast<double>(predictions.size());
  return out;
}

}  // namespace covren
