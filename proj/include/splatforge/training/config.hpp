#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "splatforge/features/features.hpp"
#include "splatforge/numerics/params.hpp"
#include "splatforge/texture/texture.hpp"
#include "splatforge/training/loss.hpp"

namespace splatforge {

enum class TexSupervision { kLowRes, kHighRes };

/// Every tunable of the pipeline in one place. JSON keys are flat; see
/// to_json for the names.
struct PipelineConfig {
  int factor = 4;
  double depth_near = 0.5;
  double depth_far = 100.0;
  std::size_t depth_count = 32;
  FeatureConfig features;
  std::size_t head_hidden = 32;
  std::size_t tr_hidden = 16;
  TexSupervision tex_supervision = TexSupervision::kLowRes;
  DensifyConfig densify;
  LossConfig loss;
  AdamConfig adam;
  int steps = 300;
  std::uint64_t seed = 0;
  int eval_every = 50;
  bool use_reference = true;

  /// Throws ValidationError naming the first bad field.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace splatforge
