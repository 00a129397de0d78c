#pragma once

#include <span>
#include <vector>

#include "splatforge/gaussians/gaussians.hpp"
#include "splatforge/numerics/params.hpp"
#include "splatforge/numerics/tensor.hpp"

namespace splatforge {

enum class TextureSource { kSobelOracle, kPerceptron };

/// Non-negative texture richness, values [h, w].
struct TextureMap {
  Tensor values;
  TextureSource source = TextureSource::kSobelOracle;
};

/// Horizontal and vertical Sobel responses of the luminance of an [h,w,3]
/// image with replicated borders, as an [h, w, 2] map (Tx, Ty).
/// Differentiable with respect to the image.
Tensor sobel_gradients(const Tensor& image);

/// sqrt(Tx^2 + Ty^2) of the luminance. Constant (no gradient).
TextureMap sobel_tr(const Tensor& image);

/// "tr.conv{1,2,3}.{weight,bias}": 3 -> hidden -> hidden -> 1.
void init_tr_params(ParamStore& store, Rng& rng, std::size_t hidden = 16);

/// conv3x3 + tanh, conv3x3 + tanh, conv3x3 + softplus. Output [h, w].
TextureMap tr_perceptron(const Tensor& image, const ParamStore& params);

/// Mean absolute difference.
Tensor tex_loss(const TextureMap& pred, const TextureMap& oracle);

struct DensifyConfig {
  double quantile = 0.8;     // 1.0 selects nothing
  std::size_t children = 4;
  double shrink = 0.5;
  std::size_t hidden = 32;

  void validate() const;
};

/// Linearly interpolated tau-quantile of `values` (type 7).
double quantile(std::span<const double> values, double tau);

/// Indices of primitives whose pixel's TR is strictly above the per-view
/// tau-quantile. `tr[v]` is view v's map on the grid that produced the set.
std::vector<std::size_t> select_dense(const GaussianSet& set, std::span<const Tensor> tr, double tau);

/// "densify.fc{1,2}.{weight,bias}"; the output layer starts at zero.
void init_densify_params(ParamStore& store, std::size_t feature_channels, const DensifyConfig& config, Rng& rng);

/// Spawns `children` primitives per selected parent and returns the coarse
/// set followed by the children. The net maps position ⊕ feature to child
/// offsets (in units of the parent's mean scale) and feature residuals; child
/// opacity, rotation and colour come from the decode heads, child scale is the
/// parent's times `shrink`.
GaussianSet densify(const GaussianSet& coarse, std::span<const Tensor> tr, const DensifyConfig& config,
                    const ParamStore& params);

}  // namespace splatforge
