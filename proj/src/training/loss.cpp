#include "splatforge/training/loss.hpp"

#include <cmath>
#include <string>

#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"

namespace splatforge {

void LossConfig::validate() const {
  if (lambda_mse < 0 || lambda_perc < 0 || lambda_tex < 0) throw ValidationError("loss weights must be non-negative");
  if (lambda_mse + lambda_perc + lambda_tex <= 0) throw ValidationError("at least one loss weight must be positive");
}

Tensor perceptual_proxy(const Tensor& render, const Tensor& gt) {
  return ops::l1(sobel_gradients(render), sobel_gradients(gt.detach()));
}

LossTerms total_loss(const Tensor& render, const Tensor& gt, const TextureMap& tr_pred, const TextureMap& tr_oracle,
                     const LossConfig& config) {
  config.validate();
  if (render.shape() != gt.shape()) {
    throw ValidationError("total_loss: render " + shape_string(render.shape()) + " vs ground truth " +
                          shape_string(gt.shape()));
  }
  LossTerms terms;
  Tensor mse = ops::mse(render, gt.detach());
  Tensor perc = perceptual_proxy(render, gt);
  terms.mse = mse.item();
  terms.perc = perc.item();
  terms.total = ops::add(ops::scale(mse, config.lambda_mse), ops::scale(perc, config.lambda_perc));
  if (tr_pred.values.defined()) {
    Tensor tex = tex_loss(tr_pred, tr_oracle);
    terms.tex = tex.item();
    terms.total = ops::add(terms.total, ops::scale(tex, config.lambda_tex));
  }
  return terms;
}

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw ValidationError(std::string(what) + ": images differ in shape");
  }
}

Image gray(const Image& im) { return im.channels == 3 ? luminance(im) : im; }

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  const double mse = se / static_cast<double>(a.data.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  if (a.height < kWin || a.width < kWin) throw ValidationError("ssim: image is smaller than the 11x11 window");
  const Image x = gray(a), y = gray(b);
  double kernel[kWin], norm = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    kernel[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    norm += kernel[i];
  }
  for (double& k : kernel) k /= norm;
  const std::size_t oh = x.height - kWin + 1, ow = x.width - kWin + 1;
  double total = 0.0;
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          const double w = kernel[i] * kernel[j];
          const double vx = x.data[(r + i) * x.width + c + j], vy = y.data[(r + i) * y.width + c + j];
          mx += w * vx;
          my += w * vy;
          sxx += w * vx * vx;
          syy += w * vy * vy;
          sxy += w * vx * vy;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(oh * ow);
}

}  // namespace splatforge
