#include "splatforge/depth/depth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"

namespace splatforge {

DepthCandidates::DepthCandidates(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw ValidationError("depth candidates: need at least two values");
  if (!(values_.front() > 0.0)) throw ValidationError("depth candidates: first value must be positive");
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k])) throw ValidationError("depth candidates: values must be finite");
    if (k > 0 && !(values_[k] > values_[k - 1])) throw ValidationError("depth candidates: must be strictly increasing");
  }
}

DepthCandidates DepthCandidates::inverse_uniform(double near, double far, std::size_t count) {
  if (!(near > 0.0) || !(far > near)) throw ValidationError("depth range must satisfy 0 < near < far");
  if (count < 2) throw ValidationError("depth candidate count must be at least 2");
  std::vector<double> v(count);
  const double a = 1.0 / near, b = 1.0 / far;
  // Index 0 is the nearest plane so that the list increases.
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(count - 1);
    v[k] = 1.0 / (a + (b - a) * t);
  }
  v.front() = near;
  v.back() = far;
  return DepthCandidates(std::move(v));
}

double DepthCandidates::local_spacing(std::size_t k) const {
  if (k >= values_.size()) throw ValidationError("local_spacing: index out of range");
  double s = std::numeric_limits<double>::infinity();
  if (k > 0) s = std::min(s, values_[k] - values_[k - 1]);
  if (k + 1 < values_.size()) s = std::min(s, values_[k + 1] - values_[k]);
  return s;
}

CostVolume cost_volume(const Tensor& feature, const WarpedFeature& warped) {
  const Tensor& w = warped.values;
  if (feature.rank() != 3 || w.rank() != 4 || w.dim(0) != feature.dim(0) || w.dim(1) != feature.dim(1) ||
      w.dim(3) != feature.dim(2)) {
    throw ValidationError("cost_volume: feature " + shape_string(feature.shape()) + " and warped " +
                          shape_string(w.shape()) + " do not agree");
  }
  const std::size_t h = w.dim(0), wd = w.dim(1), d = w.dim(2), c = w.dim(3);
  if (warped.valid.size() != h * wd * d) throw ValidationError("cost_volume: validity mask has the wrong size");
  Tensor f = ops::reshape(feature, {h * wd, 1, c});
  Tensor g = ops::transpose_last2(ops::reshape(w, {h * wd, d, c}));
  Tensor dots = ops::scale(ops::bmm(f, g), 1.0 / std::sqrt(static_cast<double>(c)));
  return {ops::reshape(dots, {h, wd, d}), warped.valid};
}

CostVolume average_volumes(std::span<const CostVolume> volumes) {
  if (volumes.empty()) throw ValidationError("average_volumes: no volumes");
  if (volumes.size() == 1) return volumes[0];
  const Shape& shape = volumes[0].scores.shape();
  const std::size_t n = shape_numel(shape);
  std::vector<double> count(n, 0.0);
  for (const CostVolume& v : volumes) {
    if (v.scores.shape() != shape || v.mask.size() != n) throw ValidationError("average_volumes: shape mismatch");
    for (std::size_t i = 0; i < n; ++i) count[i] += v.mask[i] ? 1.0 : 0.0;
  }
  CostVolume out;
  out.mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.mask[i] = count[i] > 0.0;
  for (const CostVolume& v : volumes) {
    std::vector<double> weight(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (v.mask[i]) weight[i] = 1.0 / count[i];
    }
    Tensor term = ops::mul(v.scores, Tensor::constant(shape, std::move(weight)));
    out.scores = out.scores.defined() ? ops::add(out.scores, term) : term;
  }
  return out;
}

Tensor softmax_depth(const CostVolume& volume, const DepthCandidates& candidates, MaskedPixelPolicy policy,
                     Tensor* weights) {
  const Tensor& s = volume.scores;
  if (s.rank() != 3 || s.dim(2) != candidates.size()) {
    throw ValidationError("softmax_depth: volume " + shape_string(s.shape()) + " does not match " +
                          std::to_string(candidates.size()) + " candidates");
  }
  const std::size_t h = s.dim(0), w = s.dim(1), d = s.dim(2);
  std::vector<std::uint8_t> mask = volume.mask;
  if (mask.empty()) mask.assign(h * w * d, 1);
  if (mask.size() != h * w * d) throw ValidationError("softmax_depth: mask has the wrong size");
  for (std::size_t p = 0; p < h * w; ++p) {
    auto row = std::span(mask).subspan(p * d, d);
    if (std::none_of(row.begin(), row.end(), [](std::uint8_t m) { return m != 0; })) {
      if (policy == MaskedPixelPolicy::kError) {
        throw ValidationError("softmax_depth: every candidate is masked at pixel (" + std::to_string(p % w) + ", " +
                              std::to_string(p / w) + ")");
      }
      std::fill(row.begin(), row.end(), std::uint8_t{1});
    }
  }
  Tensor probs = ops::softmax_last(s, mask);
  if (weights) *weights = probs;
  std::vector<double> g(candidates.values().begin(), candidates.values().end());
  Tensor depth = ops::matmul(ops::reshape(probs, {h * w, d}), Tensor::constant({d, 1}, std::move(g)));
  return ops::reshape(depth, {h, w});
}

void init_depth_params(ParamStore& store) {
  store.add("depth.refine.weight", {3, 3, 1, 1}, std::vector<double>(9, 0.0));
  store.add("depth.refine.bias", {1}, {0.0});
}

Tensor regress_depth(const CostVolume& volume, const DepthCandidates& candidates, const ParamStore& params,
                     std::size_t factor, MaskedPixelPolicy policy) {
  if (factor < 1) throw ValidationError("regress_depth: factor must be positive");
  Tensor low = softmax_depth(volume, candidates, policy);
  const std::size_t h = low.dim(0) * factor, w = low.dim(1) * factor;
  Tensor up = ops::resize_bilinear(ops::reshape(low, {low.dim(0), low.dim(1), 1}), h, w);
  Tensor refined = ops::add(up, ops::conv2d(up, params.get("depth.refine.weight"), params.get("depth.refine.bias"), 1, 1));
  return ops::reshape(ops::clamp(refined, candidates.front(), candidates.back()), {h, w});
}

std::vector<std::uint16_t> depth_to_u16(const Tensor& depth, const DepthCandidates& candidates) {
  const double lo = candidates.front(), span = candidates.back() - candidates.front();
  std::vector<std::uint16_t> out(depth.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = std::clamp((depth[i] - lo) / span, 0.0, 1.0);
    out[i] = static_cast<std::uint16_t>(std::lround(t * 65535.0));
  }
  return out;
}

}  // namespace splatforge
