#include <string>

#include "splatforge/errors.hpp"
#include "splatforge/features/features.hpp"
#include "splatforge/numerics/ops.hpp"

namespace splatforge {

namespace {

std::string conv_name(int level, const char* part) {
  return "encoder.conv" + std::to_string(level) + "." + part;
}

}  // namespace

void init_encoder_params(ParamStore& store, const FeatureConfig& config, Rng& rng) {
  std::size_t in = 3;
  const std::size_t c = config.feature_channels;
  for (int level = 1; level <= 3; ++level) {
    store.add(conv_name(level, "weight"), {3, 3, in, c}, glorot_uniform(rng, 9 * in * c, 9 * in, 9 * c));
    store.add(conv_name(level, "bias"), {c}, std::vector<double>(c, 0.0));
    in = c;
  }
}

FeaturePyramid encode(const Tensor& image, const ParamStore& params, PyramidRole role) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ValidationError("encode: expected an [H,W,3] image, got " + shape_string(image.shape()));
  }
  if (image.dim(0) % 8 != 0 || image.dim(1) % 8 != 0) {
    throw ValidationError("encode: image " + shape_string(image.shape()) + " is not divisible by 8");
  }
  FeaturePyramid out;
  out.role = role;
  Tensor x = image;
  for (int level = 1; level <= 3; ++level) {
    x = ops::tanh(ops::conv2d(x, params.get(conv_name(level, "weight")), params.get(conv_name(level, "bias")), 2, 1));
    out.levels[level - 1] = x;
  }
  return out;
}

}  // namespace splatforge
