#pragma once

#include "splatforge/geometry/image.hpp"
#include "splatforge/numerics/tensor.hpp"
#include "splatforge/texture/texture.hpp"

namespace splatforge {

/// The perceptual weight drives a Sobel-gradient L1 proxy; set it to 0 to
/// turn the proxy off.
struct LossConfig {
  double lambda_mse = 1.0;
  double lambda_perc = 0.05;
  double lambda_tex = 0.01;

  void validate() const;
};

struct LossTerms {
  Tensor total;
  double mse = 0.0;
  double perc = 0.0;
  double tex = 0.0;
};

/// Mean absolute difference of the luminance Sobel responses (Tx, Ty).
Tensor perceptual_proxy(const Tensor& render, const Tensor& gt);

/// lambda_mse * MSE + lambda_perc * proxy + lambda_tex * tex_loss. The
/// texture term is skipped when `tr_pred` has no values. Reported components
/// are unweighted.
LossTerms total_loss(const Tensor& render, const Tensor& gt, const TextureMap& tr_pred, const TextureMap& tr_oracle,
                     const LossConfig& config);

constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE), capped at 100 dB.
double psnr(const Image& a, const Image& b);

/// Single-scale SSIM on luminance: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, averaged over the valid region.
double ssim(const Image& a, const Image& b);

}  // namespace splatforge
