#include <cmath>
#include <numeric>
#include <string>

#include "splatforge/errors.hpp"
#include "splatforge/features/features.hpp"
#include "splatforge/numerics/ops.hpp"

namespace splatforge {

void init_fusion_params(ParamStore& store, const FeatureConfig& config, Rng& rng) {
  const std::size_t in = 6 * config.feature_channels, c = config.enhanced_channels;
  store.add("fusion.conv1.weight", {3, 3, in, c}, glorot_uniform(rng, 9 * in * c, 9 * in, 9 * c));
  store.add("fusion.conv1.bias", {c}, std::vector<double>(c, 0.0));
  store.add("fusion.conv2.weight", {3, 3, c, c}, glorot_uniform(rng, 9 * c * c, 9 * c, 9 * c));
  store.add("fusion.conv2.bias", {c}, std::vector<double>(c, 0.0));
}

void init_attention_params(ParamStore& store, const FeatureConfig& config, Rng& rng) {
  const std::size_t c = config.enhanced_channels;
  for (const char* block : {"self", "cross"}) {
    for (const char* m : {"q", "k", "v", "o"}) {
      // The output projection starts small so the block begins near identity.
      const double gain = std::string(m) == "o" ? 0.1 : 1.0;
      store.add(std::string("attention.") + block + "." + m, {c, c}, glorot_uniform(rng, c * c, c, c, gain));
    }
  }
}

Tensor fuse(const FeaturePyramid& input, const FeaturePyramid& warped, const ParamStore& params) {
  const std::size_t h = input.levels[1].dim(0), w = input.levels[1].dim(1);
  std::vector<Tensor> parts;
  for (const FeaturePyramid* p : {&input, &warped}) {
    for (const Tensor& level : p->levels) {
      parts.push_back(level.dim(0) == h && level.dim(1) == w ? level : ops::resize_bilinear(level, h, w));
    }
  }
  const Tensor x = ops::concat(parts, 2);
  const Tensor& w1 = params.get("fusion.conv1.weight");
  if (w1.dim(2) != x.dim(2)) {
    throw ValidationError("fuse: fusion weights expect " + std::to_string(w1.dim(2)) + " channels, got " +
                          std::to_string(x.dim(2)));
  }
  Tensor y = ops::tanh(ops::conv2d(x, w1, params.get("fusion.conv1.bias"), 1, 1));
  return ops::conv2d(y, params.get("fusion.conv2.weight"), params.get("fusion.conv2.bias"), 1, 1);
}

namespace {

// Row order that groups pixels window by window, and its inverse.
struct WindowOrder {
  std::vector<std::size_t> forward;
  std::vector<std::size_t> inverse;
  std::size_t windows = 0;
  std::size_t tokens = 0;
};

WindowOrder window_order(std::size_t h, std::size_t w, std::size_t win) {
  WindowOrder order;
  order.windows = (h / win) * (w / win);
  order.tokens = win * win;
  order.forward.reserve(h * w);
  for (std::size_t wy = 0; wy < h; wy += win) {
    for (std::size_t wx = 0; wx < w; wx += win) {
      for (std::size_t y = wy; y < wy + win; ++y) {
        for (std::size_t x = wx; x < wx + win; ++x) order.forward.push_back(y * w + x);
      }
    }
  }
  order.inverse.resize(h * w);
  for (std::size_t i = 0; i < order.forward.size(); ++i) order.inverse[order.forward[i]] = i;
  return order;
}

Tensor to_windows(const Tensor& map, const WindowOrder& order) {
  const std::size_t c = map.dim(2);
  Tensor rows = ops::gather_rows(ops::reshape(map, {map.dim(0) * map.dim(1), c}), order.forward);
  return ops::reshape(rows, {order.windows, order.tokens, c});
}

}  // namespace

Tensor windowed_attention(const Tensor& query, std::span<const Tensor> context, const ParamStore& params,
                          std::string_view prefix, int window, Tensor* weights) {
  if (query.rank() != 3) throw ValidationError("windowed_attention: query must be [H,W,C]");
  if (context.empty()) throw ValidationError("windowed_attention: no context maps");
  if (window < 1) throw ValidationError("windowed_attention: window must be positive");
  const std::size_t h = query.dim(0), w = query.dim(1), c = query.dim(2);
  const std::size_t win = static_cast<std::size_t>(window);
  if (h % win != 0 || w % win != 0) {
    throw ValidationError("windowed_attention: map " + shape_string(query.shape()) + " is not divisible by window " +
                          std::to_string(window));
  }
  for (const Tensor& ctx : context) {
    if (ctx.shape() != query.shape()) throw ValidationError("windowed_attention: context shape mismatch");
  }
  const std::string p(prefix);
  const Tensor none;
  const WindowOrder order = window_order(h, w, win);

  Tensor q = ops::linear(to_windows(query, order), params.get(p + ".q"), none);
  std::vector<Tensor> ctx_windows;
  for (const Tensor& ctx : context) ctx_windows.push_back(to_windows(ctx, order));
  Tensor kv_in = ctx_windows.size() == 1 ? ctx_windows[0] : ops::concat(ctx_windows, 1);
  Tensor k = ops::linear(kv_in, params.get(p + ".k"), none);
  Tensor v = ops::linear(kv_in, params.get(p + ".v"), none);

  Tensor scores = ops::scale(ops::bmm(q, ops::transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(c)));
  Tensor attn = ops::softmax_last(scores);
  if (weights) *weights = attn;
  Tensor out = ops::linear(ops::bmm(attn, v), params.get(p + ".o"), none);
  Tensor rows = ops::gather_rows(ops::reshape(out, {h * w, c}), order.inverse);
  return ops::add(query, ops::reshape(rows, {h, w, c}));
}

std::vector<Tensor> cross_view_exchange(std::span<const Tensor> features, const ParamStore& params, int window) {
  if (features.size() < 2) throw ValidationError("cross_view_exchange: needs at least two views");
  for (const Tensor& f : features) {
    if (f.shape() != features[0].shape()) throw ValidationError("cross_view_exchange: views differ in shape");
  }
  std::vector<Tensor> selfed;
  for (const Tensor& f : features) {
    const Tensor ctx[] = {f};
    selfed.push_back(windowed_attention(f, ctx, params, "attention.self", window));
  }
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < selfed.size(); ++i) {
    std::vector<Tensor> others;
    for (std::size_t j = 0; j < selfed.size(); ++j) {
      if (j != i) others.push_back(selfed[j]);
    }
    out.push_back(windowed_attention(selfed[i], others, params, "attention.cross", window));
  }
  return out;
}

}  // namespace splatforge
