#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "splatforge/numerics/params.hpp"
#include "splatforge/numerics/tensor.hpp"

// Reference-guided feature enhancement: a shared three-level encoder,
// coarse-to-fine matching against the reference twin, score-weighted warping,
// fusion onto the quarter-resolution grid, and windowed attention across views.
namespace splatforge {

struct FeatureConfig {
  std::size_t feature_channels = 16;
  std::size_t enhanced_channels = 32;
  int match_stride = 4;
  int match_radius = 2;
  int attention_window = 4;
};

enum class PyramidRole { kInput, kReference, kWarpedReference };

/// levels[l] has shape [H / 2^(l+1), W / 2^(l+1), C].
struct FeaturePyramid {
  std::array<Tensor, 3> levels;
  PyramidRole role = PyramidRole::kInput;
};

void init_encoder_params(ParamStore& store, const FeatureConfig& config, Rng& rng);
void init_fusion_params(ParamStore& store, const FeatureConfig& config, Rng& rng);
void init_attention_params(ParamStore& store, const FeatureConfig& config, Rng& rng);

/// Shared stride-2 conv + tanh per level. H and W must be divisible by 8.
FeaturePyramid encode(const Tensor& image, const ParamStore& params,
                      PyramidRole role = PyramidRole::kInput);

/// Correspondences for one pyramid level, indexed by source pixel y * w + x.
struct MatchLevel {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> u;  // reference column
  std::vector<std::uint32_t> v;  // reference row
  std::vector<double> score;     // cosine similarity at (u, v)
  std::vector<double> seed_score;  // similarity at the propagated candidate
};

struct MatchMap {
  std::array<MatchLevel, 3> levels;
};

/// Coarse-to-fine cosine matching of L2-normalised features.
///
/// On the coarsest level, source pixels on a `stride` grid are matched by
/// exhaustive search; every other pixel starts from its grid anchor's offset.
/// Each level then searches a (2 radius + 1)^2 window around its candidate,
/// and offsets are doubled on the way to the next finer level. Ties go to the
/// smallest row-major reference index. Results carry no gradient.
MatchMap match(const FeaturePyramid& input, const FeaturePyramid& reference, int stride, int radius);

/// F(x, y) = max(s, 0) * F_ref(u, v) per level. Differentiable with respect to
/// the reference features; the match itself is treated as constant.
FeaturePyramid warp_by_match(const FeaturePyramid& reference, const MatchMap& matches);

/// Resamples all six maps to the level-1 grid (H/4), concatenates channels
/// and applies conv3x3 -> tanh -> conv3x3. Output [H/4, W/4, C_enhanced].
Tensor fuse(const FeaturePyramid& input, const FeaturePyramid& warped, const ParamStore& params);

/// One attention block over non-overlapping windows: queries from `query`,
/// keys/values from the windows of `context` concatenated along the token axis.
/// Returns query + projected attention output. `weights`, when given, receives
/// the [windows, tokens, context_tokens] attention matrix.
Tensor windowed_attention(const Tensor& query, std::span<const Tensor> context, const ParamStore& params,
                          std::string_view prefix, int window, Tensor* weights = nullptr);

/// Self-attention per view, then cross-attention of every view against the
/// others. Shapes are preserved.
std::vector<Tensor> cross_view_exchange(std::span<const Tensor> features, const ParamStore& params, int window);

}  // namespace splatforge
