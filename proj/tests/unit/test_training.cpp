#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "splatforge/assets/scene.hpp"
#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"
#include "splatforge/training/config.hpp"
#include "splatforge/training/loss.hpp"
#include "splatforge/training/pipeline.hpp"
#include "splatforge/training/train.hpp"

using namespace splatforge;
using nlohmann::json;

namespace {

Image gray_image(std::size_t h, std::size_t w, const std::function<double(std::size_t, std::size_t)>& f) {
  Image im(h, w, 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) im.at(y, x, c) = f(y, x);
  return im;
}

PipelineConfig tiny_config() {
  PipelineConfig c;
  c.factor = 2;
  c.depth_count = 6;
  c.features = {4, 6, 2, 1, 2};
  c.head_hidden = 8;
  c.tr_hidden = 4;
  c.densify.hidden = 4;
  c.eval_every = 2;
  c.seed = 3;
  return c;
}

Scene tiny_scene() {
  const json doc = json::parse(R"({
    "width": 32, "height": 32, "focal": 32, "supersample": 1,
    "textures": {"n": {"type": "value_noise", "period": 0.2}},
    "objects": [{"type": "plane", "center": [0, 0, 2], "size": [8, 8], "texture": "n"}],
    "cameras": {"list": [{"position": [0, 0, 0], "look_at": [0, 0, 2]},
                         {"position": [0.1, 0, 0], "look_at": [0.1, 0, 2]},
                         {"position": [0.2, 0, 0], "look_at": [0.2, 0, 2]}]},
    "depth_range": [1, 4]
  })");
  return gen_scene(parse_scene_spec(doc), 0, 2, "tiny");
}

}  // namespace

TEST_CASE("total_loss examples") {
  Rng rng(1);
  const Tensor gt = testing::random_tensor(rng, {12, 12, 3}, 0.1, 0.8);
  const TextureMap tr{testing::random_tensor(rng, {6, 6}, 0, 1), TextureSource::kSobelOracle};
  LossConfig cfg;
  CHECK(total_loss(gt, gt, tr, tr, cfg).total.item() == 0.0);

  const Tensor offset = ops::add_scalar(gt, 0.1);
  const LossTerms t = total_loss(offset, gt, {}, {}, cfg);
  CHECK(t.mse == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(t.perc <= 1e-12);
  CHECK(t.total.item() == doctest::Approx(cfg.lambda_mse * 0.01 + cfg.lambda_perc * t.perc).epsilon(1e-12));

  const Tensor render = testing::random_tensor(rng, {12, 12, 3}, 0, 1);
  const TextureMap pred{testing::random_tensor(rng, {6, 6}, 0, 1), TextureSource::kPerceptron};
  const LossTerms mse_only = total_loss(render, gt, pred, tr, {2.0, 0.0, 0.0});
  CHECK(mse_only.total.item() == doctest::Approx(2.0 * ops::mse(render, gt).item()).epsilon(1e-12));

  const LossTerms all = total_loss(render, gt, pred, tr, cfg);
  CHECK(all.mse >= 0.0);
  CHECK(all.perc >= 0.0);
  CHECK(all.tex >= 0.0);
  CHECK(std::fabs(all.total.item() - (cfg.lambda_mse * all.mse + cfg.lambda_perc * all.perc + cfg.lambda_tex * all.tex)) <=
        1e-9);

  CHECK_THROWS_AS(total_loss(render, Tensor::zeros({12, 11, 3}), {}, {}, cfg), ValidationError);
  CHECK_THROWS_AS(total_loss(render, gt, {}, {}, {0.0, 0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(total_loss(render, gt, {}, {}, {-1.0, 1.0, 0.0}), ValidationError);
}

TEST_CASE("total_loss gradients") {
  Rng rng(2);
  ParamStore store;
  store.add("render", {6, 6, 3}, testing::uniform(rng, 108, 0, 1));
  const Tensor gt = testing::random_tensor(rng, {6, 6, 3}, 0, 1);
  const double err =
      check_gradients([&](const ParamStore& s) { return total_loss(s.get("render"), gt, {}, {}, {}).total; }, store);
  CHECK(err < 1e-5);
}

TEST_CASE("psnr examples") {
  const Image a(4, 4, 3, 0.3);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, Image(4, 4, 3, 0.4)) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(Image(4, 4, 3, 0.0), Image(4, 4, 3, 1.0)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(psnr(a, Image(4, 4, 1)), ValidationError);
}

TEST_CASE("ssim examples") {
  Rng rng(3);
  Image a(16, 16, 3);
  for (double& v : a.data) v = std::uniform_real_distribution<double>(0, 1)(rng);
  CHECK(ssim(a, a) == 1.0);

  auto checker = [](std::size_t y, std::size_t x) { return static_cast<double>((x + y) % 2); };
  const Image c = gray_image(16, 16, checker);
  const Image neg = gray_image(16, 16, [&](std::size_t y, std::size_t x) { return 1.0 - checker(y, x); });
  CHECK(ssim(c, neg) < 0.0);

  // Flat images have no variance, so only the luminance term remains.
  const double m1 = 0.2, m2 = 0.7, c1 = 1e-4;
  CHECK(ssim(Image(12, 12, 3, m1), Image(12, 12, 3, m2)) ==
        doctest::Approx((2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1)).epsilon(1e-9));
  CHECK_THROWS_AS(ssim(Image(10, 12, 3), Image(10, 12, 3)), ValidationError);
}

TEST_CASE("config json round trip and validation") {
  PipelineConfig c = tiny_config();
  c.tex_supervision = TexSupervision::kHighRes;
  c.adam.lr = 3e-3;
  const PipelineConfig back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  CHECK(config_from_json(json::object()).factor == 4);
  CHECK(config_from_json(json{{"lr", 0.01}}).adam.lr == 0.01);
  CHECK_THROWS_AS(config_from_json(json{{"learning_rate", 0.01}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"factor", 3}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"depth_near", 5.0}, {"depth_far", 1.0}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"densify_quantile", 0.0}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"lambda_mse", 0}, {"lambda_perc", 0}, {"lambda_tex", 0}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"tex_supervision", "mid"}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"steps", "many"}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::array()), ValidationError);

  testing::TempDir dir;
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
  std::ofstream(dir / "bad.json") << "{";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ValidationError);
}

TEST_CASE("zero steps leave parameters unchanged") {
  const PipelineConfig cfg = tiny_config();
  const Scene scene = tiny_scene();
  ParamStore params = make_pipeline_params(cfg);
  const ParamStore before = make_pipeline_params(cfg);
  const Scene scenes[] = {scene};
  CHECK(train(scenes, params, cfg, 0).rows.empty());
  for (const auto& name : params.names()) {
    const auto x = params.get(name).values(), y = before.get(name).values();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  CHECK_THROWS_AS(train(scenes, params, cfg, -1), ValidationError);
}

TEST_CASE("training is deterministic and reports consistent components") {
  const PipelineConfig cfg = tiny_config();
  const Scene scenes[] = {tiny_scene()};
  auto run = [&] {
    ParamStore params = make_pipeline_params(cfg);
    return train(scenes, params, cfg, 3);
  };
  const TrainReport a = run(), b = run();
  REQUIRE(a.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const TrainRow& r = a.rows[i];
    CHECK(r.step == static_cast<int>(i));
    CHECK(r.loss_total == b.rows[i].loss_total);
    CHECK(r.loss_mse >= 0.0);
    CHECK(r.loss_perc >= 0.0);
    CHECK(r.loss_tex >= 0.0);
    const double sum =
        cfg.loss.lambda_mse * r.loss_mse + cfg.loss.lambda_perc * r.loss_perc + cfg.loss.lambda_tex * r.loss_tex;
    CHECK(std::fabs(r.loss_total - sum) <= 1e-9);
  }
  // eval_every = 2: metrics after step 1 and after the last step.
  CHECK(!a.rows[0].psnr);
  CHECK(a.rows[1].psnr);
  CHECK(a.rows[2].psnr);
  CHECK(*a.rows[2].ssim <= 1.0);

  testing::TempDir dir;
  write_report_csv(a, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,loss_total,loss_mse,loss_perc,loss_tex,psnr,ssim,seconds");
}

TEST_CASE("training needs three views and two contexts") {
  const PipelineConfig cfg = tiny_config();
  ParamStore params = make_pipeline_params(cfg);
  Scene scene = tiny_scene();
  scene.views.pop_back();
  scene.splits = {{0, 1}, {1}, {}};
  const Scene few[] = {scene};
  CHECK_THROWS_AS(train(few, params, cfg, 1), ValidationError);
  CHECK_THROWS_AS(train({}, params, cfg, 1), ValidationError);

  PipelineConfig wrong = cfg;
  wrong.factor = 4;
  const Scene ok[] = {tiny_scene()};
  CHECK_THROWS_AS(train(ok, params, wrong, 1), ValidationError);
}

TEST_CASE("reconstruct counts and reference fallback") {
  PipelineConfig cfg = tiny_config();
  const Scene scene = tiny_scene();
  const ParamStore params = make_pipeline_params(cfg);
  const Reconstruction rec = reconstruct(scene_inputs(scene, cfg), params, cfg);
  CHECK(rec.coarse.size() == 2 * 32 * 32);
  CHECK(rec.refined.size() >= rec.coarse.size());
  CHECK(rec.refined.size() - rec.coarse.size() == rec.refined.count(Provenance::kDense));
  REQUIRE(rec.depth.size() == 2);
  for (double d : rec.depth[0].values()) {
    CHECK(d >= 1.0);
    CHECK(d <= 4.0);
  }

  cfg.densify.quantile = 1.0;
  CHECK(reconstruct(scene_inputs(scene, cfg), params, cfg).refined.size() == rec.coarse.size());

  cfg.use_reference = false;
  CHECK(!scene_inputs(scene, cfg).reference);
  CHECK_NOTHROW(reconstruct(scene_inputs(scene, cfg), params, cfg));
}
