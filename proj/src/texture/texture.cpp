#include "splatforge/texture/texture.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"

namespace splatforge {

namespace {

// Separable evaluation of the two Sobel kernels on an edge-padded [h+2,w+2,1]
// map: a central difference along one axis smoothed by (1, 2, 1) along the
// other. Differences come first, so flat regions give exact zeros.
Tensor sobel_pass(const Tensor& padded, std::size_t diff_axis) {
  const std::size_t smooth_axis = 1 - diff_axis;
  const std::size_t n_diff = padded.dim(diff_axis) - 2, n_smooth = padded.dim(smooth_axis) - 2;
  const Tensor d = ops::sub(ops::slice(padded, diff_axis, 2, n_diff + 2), ops::slice(padded, diff_axis, 0, n_diff));
  const Tensor mid = ops::scale(ops::slice(d, smooth_axis, 1, n_smooth + 1), 2.0);
  return ops::add(ops::add(ops::slice(d, smooth_axis, 0, n_smooth), mid), ops::slice(d, smooth_axis, 2, n_smooth + 2));
}

}  // namespace

Tensor sobel_gradients(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ValidationError("sobel: expected an [h,w,3] image, got " + shape_string(image.shape()));
  }
  if (image.dim(0) < 3 || image.dim(1) < 3) throw ValidationError("sobel: image is smaller than the 3x3 kernel");
  // 0.299 R + 0.587 G + 0.114 B written around G, so gray pixels map to
  // their value exactly.
  const Tensor r = ops::slice(image, 2, 0, 1), g = ops::slice(image, 2, 1, 2), b = ops::slice(image, 2, 2, 3);
  const Tensor lum = ops::add(g, ops::add(ops::scale(ops::sub(r, g), 0.299), ops::scale(ops::sub(b, g), 0.114)));
  const Tensor padded = ops::pad_replicate(lum, 1);
  const Tensor parts[] = {sobel_pass(padded, 1), sobel_pass(padded, 0)};
  return ops::concat(parts, 2);
}

TextureMap sobel_tr(const Tensor& image) {
  const Tensor g = sobel_gradients(image.detach());
  const std::size_t h = g.dim(0), w = g.dim(1);
  std::vector<double> tr(h * w);
  for (std::size_t i = 0; i < tr.size(); ++i) tr[i] = std::hypot(g[i * 2], g[i * 2 + 1]);
  return {Tensor::constant({h, w}, std::move(tr)), TextureSource::kSobelOracle};
}

void init_tr_params(ParamStore& store, Rng& rng, std::size_t hidden) {
  const std::size_t widths[] = {3, hidden, hidden, 1};
  for (int l = 0; l < 3; ++l) {
    const std::size_t ci = widths[l], co = widths[l + 1];
    const std::string base = "tr.conv" + std::to_string(l + 1);
    store.add(base + ".weight", {3, 3, ci, co}, glorot_uniform(rng, 9 * ci * co, 9 * ci, 9 * co));
    store.add(base + ".bias", {co}, std::vector<double>(co, 0.0));
  }
}

TextureMap tr_perceptron(const Tensor& image, const ParamStore& params) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ValidationError("tr_perceptron: expected an [h,w,3] image, got " + shape_string(image.shape()));
  }
  Tensor x = image;
  for (int l = 1; l <= 3; ++l) {
    const std::string base = "tr.conv" + std::to_string(l);
    x = ops::conv2d(x, params.get(base + ".weight"), params.get(base + ".bias"), 1, 1);
    x = l < 3 ? ops::tanh(x) : ops::softplus(x);
  }
  return {ops::reshape(x, {image.dim(0), image.dim(1)}), TextureSource::kPerceptron};
}

Tensor tex_loss(const TextureMap& pred, const TextureMap& oracle) {
  if (pred.values.shape() != oracle.values.shape()) {
    throw ValidationError("tex_loss: shapes " + shape_string(pred.values.shape()) + " and " +
                          shape_string(oracle.values.shape()) + " differ");
  }
  return ops::l1(pred.values, oracle.values);
}

void DensifyConfig::validate() const {
  if (!(quantile > 0.0 && quantile <= 1.0)) throw ValidationError("densify: quantile must be in (0, 1]");
  if (children < 2) throw ValidationError("densify: need at least 2 children per parent");
  if (!(shrink > 0.0 && shrink < 1.0)) throw ValidationError("densify: shrink must be in (0, 1)");
  if (hidden == 0) throw ValidationError("densify: hidden width must be positive");
}

double quantile(std::span<const double> values, double tau) {
  if (values.empty()) throw ValidationError("quantile of an empty set");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("quantile level must be in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = tau * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<std::size_t> select_dense(const GaussianSet& set, std::span<const Tensor> tr, double tau) {
  if (set.pixels.size() != set.size()) throw ValidationError("select_dense: set carries no pixel references");
  std::vector<double> threshold(tr.size());
  for (std::size_t v = 0; v < tr.size(); ++v) {
    if (tr[v].rank() != 2) throw ValidationError("select_dense: texture maps must be [h,w]");
    threshold[v] = quantile(tr[v].values(), tau);
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.provenance[i] != Provenance::kCoarse) continue;
    const PixelRef& p = set.pixels[i];
    if (p.view >= tr.size()) throw ValidationError("select_dense: no texture map for view " + std::to_string(p.view));
    const Tensor& map = tr[p.view];
    if (p.y >= map.dim(0) || p.x >= map.dim(1)) throw ValidationError("select_dense: texture map is smaller than the view");
    if (map[p.y * map.dim(1) + p.x] > threshold[p.view]) out.push_back(i);
  }
  return out;
}

void init_densify_params(ParamStore& store, std::size_t feature_channels, const DensifyConfig& config, Rng& rng) {
  config.validate();
  const std::size_t in = 3 + feature_channels, hid = config.hidden;
  const std::size_t out = config.children * (3 + feature_channels);
  store.add("densify.fc1.weight", {in, hid}, glorot_uniform(rng, in * hid, in, hid));
  store.add("densify.fc1.bias", {hid}, std::vector<double>(hid, 0.0));
  store.add("densify.fc2.weight", {hid, out}, std::vector<double>(hid * out, 0.0));
  store.add("densify.fc2.bias", {out}, std::vector<double>(out, 0.0));
}

GaussianSet densify(const GaussianSet& coarse, std::span<const Tensor> tr, const DensifyConfig& config,
                    const ParamStore& params) {
  config.validate();
  if (coarse.empty()) throw ValidationError("densify: empty coarse set");
  if (!coarse.features.defined()) throw ValidationError("densify: coarse set carries no features");
  const std::vector<std::size_t> parents = select_dense(coarse, tr, config.quantile);
  if (parents.empty()) return coarse;

  const std::size_t m = parents.size(), k = config.children, f = coarse.features.dim(1);
  std::vector<std::size_t> repeated(m * k);
  for (std::size_t i = 0; i < m; ++i) std::fill_n(repeated.begin() + i * k, k, i);

  Tensor pos = ops::gather_rows(coarse.means, parents);
  Tensor feat = ops::gather_rows(coarse.features, parents);
  Tensor scales = ops::gather_rows(coarse.scales, parents);
  const Tensor input_parts[] = {pos, feat};
  Tensor hidden = ops::tanh(
      ops::linear(ops::concat(input_parts, 1), params.get("densify.fc1.weight"), params.get("densify.fc1.bias")));
  Tensor out = ops::linear(hidden, params.get("densify.fc2.weight"), params.get("densify.fc2.bias"));
  if (out.dim(1) != k * (3 + f)) {
    throw ValidationError("densify: network emits " + std::to_string(out.dim(1)) + " values per parent, expected " +
                          std::to_string(k * (3 + f)));
  }
  Tensor offsets = ops::reshape(ops::slice(out, 1, 0, 3 * k), {m * k, 3});
  Tensor residuals = ops::reshape(ops::slice(out, 1, 3 * k, k * (3 + f)), {m * k, f});
  Tensor unit = ops::gather_rows(ops::mean_last(scales), repeated);

  GaussianSet dense;
  dense.means = ops::add(ops::gather_rows(pos, repeated), ops::mul_bcast_last(offsets, unit));
  dense.features = ops::add(ops::gather_rows(feat, repeated), residuals);
  dense.scales = ops::scale(ops::gather_rows(scales, repeated), config.shrink);
  dense.opacities = opacity_activation(apply_head(dense.features, params, "opacity"));
  dense.rotations = rotation_activation(apply_head(dense.features, params, "rotation"));
  dense.colors = color_activation(apply_head(dense.features, params, "color"));
  dense.provenance.assign(m * k, Provenance::kDense);
  dense.pixels.reserve(m * k);
  for (std::size_t i = 0; i < m * k; ++i) dense.pixels.push_back(coarse.pixels[parents[i / k]]);
  return concat_sets(coarse, dense);
}

}  // namespace splatforge
