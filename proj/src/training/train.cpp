#include "splatforge/training/train.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>

#include "splatforge/assets/io.hpp"
#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"
#include "splatforge/render/render.hpp"

namespace splatforge {

namespace {

void require_trainable(const Scene& scene) {
  if (scene.views.size() < 3) throw ValidationError("scene '" + scene.id + "' has fewer than 3 views");
  if (scene.splits.context.size() < 2 || scene.splits.targets.empty()) {
    throw ValidationError("scene '" + scene.id + "' needs two context views and at least one target");
  }
}

TextureMap tex_oracle(const Scene& scene, std::size_t view, const PipelineConfig& config) {
  const SceneView& v = scene.views.at(view);
  if (config.tex_supervision == TexSupervision::kLowRes) return sobel_tr(to_tensor(v.lr));
  const TextureMap hr = sobel_tr(to_tensor(v.hr));
  const Image down = box_downsample(to_image(hr.values), static_cast<std::size_t>(scene.factor));
  return {Tensor::constant({down.height, down.width}, down.data), TextureSource::kSobelOracle};
}

}  // namespace

LossTerms scene_loss(const Scene& scene, const ParamStore& params, const PipelineConfig& config) {
  require_trainable(scene);
  const Reconstruction rec = reconstruct(scene_inputs(scene, config), params, config);
  LossTerms sum;
  const double inv_targets = 1.0 / static_cast<double>(scene.splits.targets.size());
  for (std::size_t t : scene.splits.targets) {
    const SceneView& view = scene.views.at(t);
    const RenderOutput out = rasterize(rec.refined, view.camera);
    LossTerms terms = total_loss(out.image, to_tensor(view.hr), {}, {}, config.loss);
    Tensor scaled = ops::scale(terms.total, inv_targets);
    sum.total = sum.total.defined() ? ops::add(sum.total, scaled) : scaled;
    sum.mse += terms.mse * inv_targets;
    sum.perc += terms.perc * inv_targets;
  }
  const double inv_context = 1.0 / static_cast<double>(scene.splits.context.size());
  for (std::size_t k = 0; k < scene.splits.context.size(); ++k) {
    Tensor tex = tex_loss(rec.tr_pred[k], tex_oracle(scene, scene.splits.context[k], config));
    sum.tex += tex.item() * inv_context;
    sum.total = ops::add(sum.total, ops::scale(tex, config.loss.lambda_tex * inv_context));
  }
  return sum;
}

EvalResult evaluate(const Scene& scene, const ParamStore& params, const PipelineConfig& config,
                    std::optional<std::vector<std::size_t>> views) {
  std::vector<std::size_t> ids = views ? *views : scene.splits.heldout;
  if (ids.empty()) ids = scene.splits.targets;
  if (ids.empty()) throw ValidationError("evaluate: scene '" + scene.id + "' has no views to score");
  const Reconstruction rec = reconstruct(scene_inputs(scene, config), params, config);
  EvalResult result;
  for (std::size_t i : ids) {
    const SceneView& view = scene.views.at(i);
    const Image render = to_image(rasterize(rec.refined, view.camera).image);
    result.view_psnr.push_back(psnr(render, view.hr));
    result.view_ssim.push_back(ssim(render, view.hr));
    result.psnr += result.view_psnr.back() / static_cast<double>(ids.size());
    result.ssim += result.view_ssim.back() / static_cast<double>(ids.size());
  }
  return result;
}

TrainReport train(std::span<const Scene> scenes, ParamStore& params, const PipelineConfig& config, int steps,
                  const TrainCallback& on_step) {
  config.validate();
  if (steps < 0) throw ValidationError("train: steps must be non-negative");
  if (scenes.empty()) throw ValidationError("train: no scenes");
  for (const Scene& s : scenes) require_trainable(s);
  TrainReport report;
  const double inv_scenes = 1.0 / static_cast<double>(scenes.size());
  for (int step = 0; step < steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    TrainRow row;
    row.step = step;
    Tensor total;
    for (const Scene& s : scenes) {
      const LossTerms terms = scene_loss(s, params, config);
      const Tensor scaled = ops::scale(terms.total, inv_scenes);
      total = total.defined() ? ops::add(total, scaled) : scaled;
      row.loss_mse += terms.mse * inv_scenes;
      row.loss_perc += terms.perc * inv_scenes;
      row.loss_tex += terms.tex * inv_scenes;
    }
    row.loss_total = total.item();
    grad(total, params);
    adam_step(params, config.adam);
    if ((step + 1) % config.eval_every == 0 || step + 1 == steps) {
      double p = 0.0, q = 0.0;
      for (const Scene& s : scenes) {
        const EvalResult e = evaluate(s, params, config);
        p += e.psnr * inv_scenes;
        q += e.ssim * inv_scenes;
      }
      row.psnr = p;
      row.ssim = q;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.rows.push_back(row);
    if (on_step) on_step(row);
  }
  return report;
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << "step,loss_total,loss_mse,loss_perc,loss_tex,psnr,ssim,seconds\n" << std::setprecision(10);
  for (const TrainRow& r : report.rows) {
    out << r.step << ',' << r.loss_total << ',' << r.loss_mse << ',' << r.loss_perc << ',' << r.loss_tex << ',';
    if (r.psnr) out << *r.psnr;
    out << ',';
    if (r.ssim) out << *r.ssim;
    out << ',' << r.seconds << '\n';
  }
}

}  // namespace splatforge
