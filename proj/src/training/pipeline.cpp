#include "splatforge/training/pipeline.hpp"

#include "splatforge/errors.hpp"
#include "splatforge/features/features.hpp"
#include "splatforge/numerics/ops.hpp"

namespace splatforge {

void init_pipeline_params(ParamStore& store, const PipelineConfig& config) {
  config.validate();
  Rng rng(config.seed);
  init_encoder_params(store, config.features, rng);
  init_fusion_params(store, config.features, rng);
  init_attention_params(store, config.features, rng);
  init_depth_params(store);
  const std::size_t decoder_in = config.features.enhanced_channels + 3;
  init_head_params(store, {decoder_in, config.head_hidden}, rng);
  init_tr_params(store, rng, config.tr_hidden);
  init_densify_params(store, decoder_in, config.densify, rng);
}

ParamStore make_pipeline_params(const PipelineConfig& config) {
  ParamStore store;
  init_pipeline_params(store, config);
  return store;
}

DepthCandidates pipeline_candidates(const PipelineConfig& config, const std::optional<std::array<double, 2>>& range) {
  if (range) return DepthCandidates::inverse_uniform((*range)[0], (*range)[1], config.depth_count);
  return DepthCandidates::inverse_uniform(config.depth_near, config.depth_far, config.depth_count);
}

namespace {

FeaturePyramid zero_pyramid(const FeaturePyramid& like) {
  FeaturePyramid out;
  out.role = PyramidRole::kWarpedReference;
  for (std::size_t l = 0; l < 3; ++l) out.levels[l] = Tensor::zeros(like.levels[l].shape());
  return out;
}

Tensor upsample_map(const Tensor& map, std::size_t h, std::size_t w) {
  Tensor x = map.rank() == 2 ? ops::reshape(map, {map.dim(0), map.dim(1), 1}) : map;
  return ops::resize_bilinear(x, h, w);
}

}  // namespace

Reconstruction reconstruct(const PipelineInputs& inputs, const ParamStore& params, const PipelineConfig& config) {
  config.validate();
  const std::size_t n = inputs.views.size();
  if (n < 2) throw ValidationError("reconstruct: need at least two context views, got " + std::to_string(n));
  const std::size_t p = static_cast<std::size_t>(config.factor);
  const std::size_t hh = inputs.views[0].camera.height(), ww = inputs.views[0].camera.width();
  for (const ContextView& v : inputs.views) {
    if (static_cast<std::size_t>(v.camera.height()) != hh || static_cast<std::size_t>(v.camera.width()) != ww) {
      throw ValidationError("reconstruct: context cameras differ in size");
    }
    if (v.lr.channels != 3 || v.lr.height * p != hh || v.lr.width * p != ww) {
      throw ValidationError("reconstruct: LR input " + std::to_string(v.lr.width) + "x" + std::to_string(v.lr.height) +
                            " is not the camera grid divided by " + std::to_string(p));
    }
  }
  if (hh % 8 != 0 || ww % 8 != 0) throw ValidationError("reconstruct: HR size must be divisible by 8");

  Reconstruction rec;
  std::optional<FeaturePyramid> ref_pyramid;
  if (inputs.reference) {
    const Image& r = *inputs.reference;
    if (r.height != hh || r.width != ww || r.channels != 3) {
      throw ValidationError("reconstruct: reference must be an RGB image on the HR grid");
    }
    ref_pyramid = encode(to_tensor(r), params, PyramidRole::kReference);
  }

  std::vector<Tensor> fused;
  for (const ContextView& v : inputs.views) {
    const Tensor up = to_tensor(bicubic_upsample(v.lr, p));
    rec.upsampled.push_back(up);
    const FeaturePyramid pyr = encode(up, params);
    FeaturePyramid warped;
    if (ref_pyramid) {
      warped = warp_by_match(*ref_pyramid, match(pyr, *ref_pyramid, config.features.match_stride,
                                                 config.features.match_radius));
    } else {
      warped = zero_pyramid(pyr);
    }
    fused.push_back(fuse(pyr, warped, params));
  }
  const std::vector<Tensor> enhanced = cross_view_exchange(fused, params, config.features.attention_window);

  const DepthCandidates candidates = pipeline_candidates(config, inputs.depth_range);
  std::vector<DecodeInput> decode_inputs;
  for (std::size_t i = 0; i < n; ++i) {
    const Camera cam_i = inputs.views[i].camera.downscaled(4);
    std::vector<CostVolume> volumes;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Camera cam_j = inputs.views[j].camera.downscaled(4);
      volumes.push_back(cost_volume(enhanced[i], warp_feature(enhanced[j], cam_i, cam_j, candidates.values())));
    }
    rec.depth.push_back(
        regress_depth(average_volumes(volumes), candidates, params, 4, MaskedPixelPolicy::kUniform));
    const Tensor parts[] = {upsample_map(enhanced[i], hh, ww), rec.upsampled[i]};
    decode_inputs.push_back({ops::concat(parts, 2), rec.depth.back(), &inputs.views[i].camera});
  }
  rec.coarse = decode(decode_inputs, params);

  std::vector<Tensor> tr_full;
  for (const ContextView& v : inputs.views) {
    rec.tr_pred.push_back(tr_perceptron(to_tensor(v.lr), params));
    tr_full.push_back(ops::reshape(upsample_map(rec.tr_pred.back().values.detach(), hh, ww), {hh, ww}));
  }
  rec.refined = densify(rec.coarse, tr_full, config.densify, params);
  return rec;
}

PipelineInputs scene_inputs(const Scene& scene, const PipelineConfig& config) {
  if (scene.factor != config.factor) {
    throw ValidationError("scene '" + scene.id + "' was generated with factor " + std::to_string(scene.factor) +
                          " but the config uses " + std::to_string(config.factor));
  }
  PipelineInputs in;
  for (std::size_t i : scene.splits.context) in.views.push_back({scene.views.at(i).lr, scene.views.at(i).camera});
  if (config.use_reference && scene.reference) in.reference = scene.reference->image;
  in.depth_range = scene.depth_range;
  return in;
}

}  // namespace splatforge
