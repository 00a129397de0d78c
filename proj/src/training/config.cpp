#include "splatforge/training/config.hpp"

#include <fstream>
#include <set>

#include "splatforge/assets/scene.hpp"
#include "splatforge/errors.hpp"

namespace splatforge {

using nlohmann::json;

void PipelineConfig::validate() const {
  validate_factor(factor);
  if (!(depth_near > 0.0) || !(depth_far > depth_near)) throw ValidationError("config: need 0 < depth_near < depth_far");
  if (depth_count < 2) throw ValidationError("config: depth_count must be at least 2");
  if (features.feature_channels == 0 || features.enhanced_channels == 0) {
    throw ValidationError("config: channel counts must be positive");
  }
  if (features.match_stride < 1) throw ValidationError("config: match_stride must be >= 1");
  if (features.match_radius < 0) throw ValidationError("config: match_radius must be >= 0");
  if (features.attention_window < 1) throw ValidationError("config: attention_window must be >= 1");
  if (head_hidden == 0 || tr_hidden == 0) throw ValidationError("config: hidden widths must be positive");
  densify.validate();
  loss.validate();
  if (!(adam.lr > 0.0)) throw ValidationError("config: lr must be positive");
  if (!(adam.eps > 0.0)) throw ValidationError("config: eps must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ValidationError("config: betas must be in [0, 1)");
  }
  if (steps < 0) throw ValidationError("config: steps must be non-negative");
  if (eval_every < 1) throw ValidationError("config: eval_every must be >= 1");
}

json to_json(const PipelineConfig& c) {
  return {{"factor", c.factor},
          {"depth_near", c.depth_near},
          {"depth_far", c.depth_far},
          {"depth_count", c.depth_count},
          {"feature_channels", c.features.feature_channels},
          {"enhanced_channels", c.features.enhanced_channels},
          {"match_stride", c.features.match_stride},
          {"match_radius", c.features.match_radius},
          {"attention_window", c.features.attention_window},
          {"head_hidden", c.head_hidden},
          {"tr_hidden", c.tr_hidden},
          {"tex_supervision", c.tex_supervision == TexSupervision::kLowRes ? "lr" : "hr"},
          {"densify_quantile", c.densify.quantile},
          {"densify_children", c.densify.children},
          {"densify_shrink", c.densify.shrink},
          {"densify_hidden", c.densify.hidden},
          {"lambda_mse", c.loss.lambda_mse},
          {"lambda_perc", c.loss.lambda_perc},
          {"lambda_tex", c.loss.lambda_tex},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"steps", c.steps},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"use_reference", c.use_reference}};
}

PipelineConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  PipelineConfig c;
  const json defaults = to_json(c);
  for (const auto& [key, value] : doc.items()) {
    if (!defaults.contains(key)) throw ValidationError("config: unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("factor", c.factor);
    get("depth_near", c.depth_near);
    get("depth_far", c.depth_far);
    get("depth_count", c.depth_count);
    get("feature_channels", c.features.feature_channels);
    get("enhanced_channels", c.features.enhanced_channels);
    get("match_stride", c.features.match_stride);
    get("match_radius", c.features.match_radius);
    get("attention_window", c.features.attention_window);
    get("head_hidden", c.head_hidden);
    get("tr_hidden", c.tr_hidden);
    if (doc.contains("tex_supervision")) {
      const auto s = doc["tex_supervision"].get<std::string>();
      if (s != "lr" && s != "hr") throw ValidationError("config: tex_supervision must be \"lr\" or \"hr\"");
      c.tex_supervision = s == "lr" ? TexSupervision::kLowRes : TexSupervision::kHighRes;
    }
    get("densify_quantile", c.densify.quantile);
    get("densify_children", c.densify.children);
    get("densify_shrink", c.densify.shrink);
    get("densify_hidden", c.densify.hidden);
    get("lambda_mse", c.loss.lambda_mse);
    get("lambda_perc", c.loss.lambda_perc);
    get("lambda_tex", c.loss.lambda_tex);
    get("lr", c.adam.lr);
    get("beta1", c.adam.beta1);
    get("beta2", c.adam.beta2);
    get("eps", c.adam.eps);
    get("steps", c.steps);
    get("seed", c.seed);
    get("eval_every", c.eval_every);
    get("use_reference", c.use_reference);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace splatforge
