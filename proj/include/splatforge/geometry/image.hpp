#pragma once

#include <cstddef>
#include <vector>

#include "splatforge/numerics/tensor.hpp"

namespace splatforge {

/// Plain HWC image with values nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
};

Tensor to_tensor(const Image& image);
/// Copies an [H,W,C] (or [H,W]) tensor into an image.
Image to_image(const Tensor& t);

/// Luminance 0.299 R + 0.587 G + 0.114 B of an RGB image -> 1 channel,
/// evaluated as G + 0.299 (R - G) + 0.114 (B - G) so grays are exact.
Image luminance(const Image& rgb);

/// The upsampler used to lift LR inputs to the target grid: half-pixel
/// bicubic (Keys, a = -0.5) with clamped edges, output clamped to [0, 1].
Image bicubic_upsample(const Image& image, std::size_t factor);

}  // namespace splatforge
