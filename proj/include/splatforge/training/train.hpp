#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "splatforge/assets/scene.hpp"
#include "splatforge/numerics/params.hpp"
#include "splatforge/training/config.hpp"
#include "splatforge/training/pipeline.hpp"

namespace splatforge {

struct TrainRow {
  int step = 0;
  double loss_total = 0.0;
  double loss_mse = 0.0;
  double loss_perc = 0.0;
  double loss_tex = 0.0;
  std::optional<double> psnr;  // held-out views, on evaluation steps
  std::optional<double> ssim;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<TrainRow> rows;
};

struct EvalResult {
  double psnr = 0.0;  // mean over the evaluated views
  double ssim = 0.0;
  std::vector<double> view_psnr;
  std::vector<double> view_ssim;
};

/// Loss of one scene: targets rendered from the context reconstruction, plus
/// the texture term of every context view, each averaged.
LossTerms scene_loss(const Scene& scene, const ParamStore& params, const PipelineConfig& config);

/// Renders `views` (default: held-out, falling back to targets) and scores
/// them against the HR ground truth.
EvalResult evaluate(const Scene& scene, const ParamStore& params, const PipelineConfig& config,
                    std::optional<std::vector<std::size_t>> views = std::nullopt);

using TrainCallback = std::function<void(const TrainRow&)>;

/// `steps` Adam updates; each step sums the per-scene losses in scene order.
/// Row k holds the loss evaluated before update k. Held-out metrics are taken
/// every config.eval_every steps and after the last step.
TrainReport train(std::span<const Scene> scenes, ParamStore& params, const PipelineConfig& config, int steps,
                  const TrainCallback& on_step = {});

/// step,loss_total,loss_mse,loss_perc,loss_tex,psnr,ssim,seconds
void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

}  // namespace splatforge
