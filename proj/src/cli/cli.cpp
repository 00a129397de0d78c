#include "splatforge/cli/cli.hpp"

#include <chrono>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "splatforge/assets/io.hpp"
#include "splatforge/assets/scene.hpp"
#include "splatforge/errors.hpp"
#include "splatforge/gaussians/gaussians.hpp"
#include "splatforge/render/render.hpp"
#include "splatforge/texture/texture.hpp"
#include "splatforge/training/config.hpp"
#include "splatforge/training/pipeline.hpp"
#include "splatforge/training/train.hpp"

namespace splatforge {

namespace fs = std::filesystem;

namespace {

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

ParamStore load_pipeline_params(const PipelineConfig& config, const std::string& path) {
  ParamStore store = make_pipeline_params(config);
  if (!path.empty()) load_params(store, path);
  return store;
}

Image normalised(const Tensor& map) {
  Image im = to_image(map);
  double hi = 0.0;
  for (double v : im.data) hi = std::max(hi, v);
  if (hi > 0.0) {
    for (double& v : im.data) v /= hi;
  }
  return im;
}

struct GenSceneArgs {
  std::string spec, out;
  std::uint64_t seed = 0;
  int factor = 4;
};

struct ReconstructArgs {
  std::string scene, config, params, out;
};

struct RenderArgs {
  std::string splat, camera, out;
};

struct EvalArgs {
  std::string scene, config, params, renders, csv, views = "heldout";
};

struct TrainArgs {
  std::vector<std::string> scenes;
  std::string config, init, out, report;
  int steps = -1;
  std::optional<std::uint64_t> seed;
};

struct TrMapArgs {
  std::string image, out_dir, config, params;
};

int gen_scene_cmd(const GenSceneArgs& a, std::ostream& out) {
  validate_factor(a.factor);
  const SceneSpec spec = load_scene_spec(a.spec);
  const fs::path dir = fs::absolute(a.out).lexically_normal();
  const std::string id = dir.filename().string();
  const Scene scene = gen_scene(spec, a.seed, a.factor, id);
  write_scene(scene, dir);
  out << "wrote scene '" << id << "' with " << scene.views.size() << " views to " << dir.string() << '\n';
  return 0;
}

int reconstruct_cmd(const ReconstructArgs& a, std::ostream& out) {
  const PipelineConfig config = config_or_default(a.config);
  if (!fs::exists(a.params)) throw IoError("params file " + a.params + " does not exist");
  const ParamStore params = load_pipeline_params(config, a.params);
  const Scene scene = load_scene(a.scene);
  const auto start = std::chrono::steady_clock::now();
  const Reconstruction rec = reconstruct(scene_inputs(scene, config), params, config);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_splat(rec.refined, a.out);
  out << "coarse " << rec.coarse.size() << "\ndense " << rec.refined.count(Provenance::kDense) << "\nrefined "
      << rec.refined.size() << "\nseconds " << std::fixed << std::setprecision(3) << seconds << '\n';
  return 0;
}

int render_cmd(const RenderArgs& a, std::ostream& out, std::ostream& err) {
  const GaussianSet set = read_splat(a.splat);
  const Camera cam = read_camera(a.camera);
  if (set.empty()) err << "warning: " << a.splat << " holds no primitives; writing background\n";
  write_png(to_image(rasterize(set, cam).image), a.out);
  out << "rendered " << set.size() << " primitives to " << a.out << '\n';
  return 0;
}

std::vector<std::size_t> view_selection(const Scene& scene, const std::string& which) {
  if (which == "heldout") return scene.splits.heldout.empty() ? scene.splits.targets : scene.splits.heldout;
  if (which == "targets") return scene.splits.targets;
  if (which == "all") {
    std::vector<std::size_t> all(scene.views.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw ValidationError("--views must be heldout, targets or all");
}

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  const Scene scene = load_scene(a.scene);
  const std::vector<std::size_t> ids = view_selection(scene, a.views);
  std::vector<std::string> names;
  std::vector<double> ps, ss;
  if (!a.renders.empty()) {
    for (std::size_t i : ids) {
      const SceneView& v = scene.views.at(i);
      const Image render = read_png(fs::path(a.renders) / (v.name + ".png"));
      names.push_back(v.name);
      ps.push_back(psnr(render, v.hr));
      ss.push_back(ssim(render, v.hr));
    }
  } else {
    const PipelineConfig config = config_or_default(a.config);
    const ParamStore params = load_pipeline_params(config, a.params);
    const EvalResult e = evaluate(scene, params, config, ids);
    for (std::size_t i : ids) names.push_back(scene.views.at(i).name);
    ps = e.view_psnr;
    ss = e.view_ssim;
  }
  std::ostringstream csv;
  csv << "view,psnr,ssim\n" << std::setprecision(10);
  out << std::left << std::setw(12) << "view" << std::right << std::setw(10) << "PSNR" << std::setw(10) << "SSIM\n";
  double mp = 0.0, ms = 0.0;
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << std::left << std::setw(12) << names[k] << std::right << std::fixed << std::setprecision(3) << std::setw(10)
        << ps[k] << std::setw(10) << ss[k] << '\n';
    csv << names[k] << ',' << ps[k] << ',' << ss[k] << '\n';
    mp += ps[k] / names.size();
    ms += ss[k] / names.size();
  }
  out << std::left << std::setw(12) << "mean" << std::right << std::setw(10) << mp << std::setw(10) << ms << '\n';
  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    if (!f) throw IoError("cannot write " + a.csv);
    f << csv.str();
  }
  return 0;
}

int train_cmd(const TrainArgs& a, std::ostream& out) {
  PipelineConfig config = config_or_default(a.config);
  if (a.seed) config.seed = *a.seed;
  const int steps = a.steps >= 0 ? a.steps : config.steps;
  ParamStore params = load_pipeline_params(config, a.init);
  std::vector<Scene> scenes;
  for (const std::string& s : a.scenes) scenes.push_back(load_scene(s));
  const TrainReport report = train(scenes, params, config, steps, [&out](const TrainRow& r) {
    out << "step " << r.step << " loss " << std::setprecision(6) << r.loss_total;
    if (r.psnr) out << " psnr " << *r.psnr << " ssim " << *r.ssim;
    out << '\n';
  });
  save_params(params, a.out);
  if (!a.report.empty()) write_report_csv(report, a.report);
  out << "saved " << params.size() << " tensors to " << a.out << '\n';
  return 0;
}

int tr_map_cmd(const TrMapArgs& a, std::ostream& out) {
  const PipelineConfig config = config_or_default(a.config);
  const ParamStore params = load_pipeline_params(config, a.params);
  Image image = read_png(a.image);
  if (image.channels != 3) throw ValidationError("tr-map needs an RGB image");
  const fs::path dir(a.out_dir);
  if (!fs::is_directory(dir)) throw IoError("output directory " + dir.string() + " does not exist");
  const Tensor t = to_tensor(image);
  write_png(normalised(sobel_tr(t).values), dir / "tr_oracle.png");
  write_png(normalised(tr_perceptron(t, params).values), dir / "tr_pred.png");
  out << "wrote tr_oracle.png and tr_pred.png to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feed-forward Gaussian splatting from low-resolution views"};
  app.require_subcommand(1);

  GenSceneArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-scene", "Render a procedural scene to disk");
  gen_cmd->add_option("--spec", gen.spec, "Scene spec JSON")->required();
  gen_cmd->add_option("--out", gen.out, "Scene directory to create")->required();
  gen_cmd->add_option("--seed", gen.seed, "Texture seed");
  gen_cmd->add_option("--factor", gen.factor, "Downsampling factor (2, 4 or 8)");

  ReconstructArgs rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Predict Gaussians from a scene's context views");
  rec_cmd->add_option("--scene", rec.scene)->required();
  rec_cmd->add_option("--config", rec.config);
  rec_cmd->add_option("--params", rec.params)->required();
  rec_cmd->add_option("--out", rec.out, ".splat output")->required();

  RenderArgs ren;
  auto* ren_cmd = app.add_subcommand("render", "Rasterize a .splat file from a camera");
  ren_cmd->add_option("--splat", ren.splat)->required();
  ren_cmd->add_option("--camera", ren.camera)->required();
  ren_cmd->add_option("--out", ren.out, "PNG output")->required();

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "PSNR/SSIM of rendered views against ground truth");
  ev_cmd->add_option("--scene", ev.scene)->required();
  ev_cmd->add_option("--config", ev.config);
  ev_cmd->add_option("--params", ev.params);
  ev_cmd->add_option("--renders", ev.renders, "Directory of <view>.png renders to score instead");
  ev_cmd->add_option("--views", ev.views, "heldout, targets or all");
  ev_cmd->add_option("--csv", ev.csv);

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train the pipeline on scenes");
  tr_cmd->add_option("--scene", tr.scenes, "Scene directory (repeatable)")->required();
  tr_cmd->add_option("--config", tr.config);
  tr_cmd->add_option("--init", tr.init, "Start from these params");
  tr_cmd->add_option("--out", tr.out, "Params JSON output")->required();
  tr_cmd->add_option("--steps", tr.steps, "Overrides the config");
  tr_cmd->add_option("--seed", tr.seed, "Overrides the config");
  tr_cmd->add_option("--report", tr.report, "CSV training report");

  TrMapArgs tm;
  auto* tm_cmd = app.add_subcommand("tr-map", "Write Sobel and predicted texture-richness maps");
  tm_cmd->add_option("--image", tm.image)->required();
  tm_cmd->add_option("--out-dir", tm.out_dir)->required();
  tm_cmd->add_option("--config", tm.config);
  tm_cmd->add_option("--params", tm.params);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help requests exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) return gen_scene_cmd(gen, out);
    if (*rec_cmd) return reconstruct_cmd(rec, out);
    if (*ren_cmd) return render_cmd(ren, out, err);
    if (*ev_cmd) return eval_cmd(ev, out);
    if (*tr_cmd) return train_cmd(tr, out);
    if (*tm_cmd) return tr_map_cmd(tm, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 1;
}

}  // namespace splatforge
