#pragma once

#include <optional>
#include <vector>

#include "splatforge/assets/scene.hpp"
#include "splatforge/depth/depth.hpp"
#include "splatforge/gaussians/gaussians.hpp"
#include "splatforge/numerics/params.hpp"
#include "splatforge/texture/texture.hpp"
#include "splatforge/training/config.hpp"

namespace splatforge {

/// Registers every learnable block, seeded from config.seed.
void init_pipeline_params(ParamStore& store, const PipelineConfig& config);
ParamStore make_pipeline_params(const PipelineConfig& config);

/// One low-resolution input and its camera on the HR grid.
struct ContextView {
  Image lr;
  Camera camera;
};

struct PipelineInputs {
  std::vector<ContextView> views;
  std::optional<Image> reference;  // HR; absent means warped features are zero
  std::optional<std::array<double, 2>> depth_range;  // overrides the config's near/far
};

struct Reconstruction {
  GaussianSet coarse;
  GaussianSet refined;
  std::vector<Tensor> depth;        // [H, W] per view
  std::vector<TextureMap> tr_pred;  // LR grid per view
  std::vector<Tensor> upsampled;    // bicubic input per view, [H, W, 3]
};

DepthCandidates pipeline_candidates(const PipelineConfig& config,
                                    const std::optional<std::array<double, 2>>& depth_range = std::nullopt);

/// encode -> match/warp/fuse -> cross-view exchange -> plane-sweep depth ->
/// decode -> texture-aware densification.
Reconstruction reconstruct(const PipelineInputs& inputs, const ParamStore& params, const PipelineConfig& config);

/// Context views and reference of a scene, honouring config.use_reference.
PipelineInputs scene_inputs(const Scene& scene, const PipelineConfig& config);

}  // namespace splatforge
