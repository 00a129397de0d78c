#include "splatforge/geometry/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "splatforge/errors.hpp"

namespace splatforge {

Tensor to_tensor(const Image& image) {
  return Tensor::constant({image.height, image.width, image.channels}, image.data);
}

Image to_image(const Tensor& t) {
  if (t.rank() != 2 && t.rank() != 3) throw ValidationError("to_image: expected [H,W,C], got " + shape_string(t.shape()));
  Image out(t.dim(0), t.dim(1), t.rank() == 3 ? t.dim(2) : 1);
  std::copy(t.values().begin(), t.values().end(), out.data.begin());
  return out;
}

Image luminance(const Image& rgb) {
  if (rgb.channels != 3) throw ValidationError("luminance needs a 3-channel image");
  Image out(rgb.height, rgb.width, 1);
  for (std::size_t i = 0; i < rgb.height * rgb.width; ++i) {
    const double r = rgb.data[i * 3], g = rgb.data[i * 3 + 1], b = rgb.data[i * 3 + 2];
    out.data[i] = g + 0.299 * (r - g) + 0.114 * (b - g);
  }
  return out;
}

namespace {

double keys_cubic(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct CubicTaps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

std::vector<CubicTaps> cubic_taps(std::size_t in, std::size_t out) {
  std::vector<CubicTaps> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double base = std::floor(s);
    const double f = s - base;
    for (int k = 0; k < 4; ++k) {
      long i = static_cast<long>(base) + k - 1;
      i = std::clamp<long>(i, 0, static_cast<long>(in) - 1);
      taps[o].index[k] = static_cast<std::size_t>(i);
      taps[o].weight[k] = keys_cubic(f - (k - 1));
    }
  }
  return taps;
}

}  // namespace

Image bicubic_upsample(const Image& image, std::size_t factor) {
  if (factor == 0 || image.empty()) throw ValidationError("bicubic_upsample: bad factor or empty image");
  const std::size_t oh = image.height * factor, ow = image.width * factor;
  auto ty = cubic_taps(image.height, oh);
  auto tx = cubic_taps(image.width, ow);
  Image out(oh, ow, image.channels);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        double acc = 0.0;
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) {
            acc += ty[y].weight[a] * tx[x].weight[b] * image.at(ty[y].index[a], tx[x].index[b], c);
          }
        }
        out.at(y, x, c) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace splatforge
