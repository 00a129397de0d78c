#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "splatforge/errors.hpp"
#include "splatforge/features/features.hpp"
#include "splatforge/numerics/ops.hpp"

using namespace splatforge;

namespace {

FeatureConfig small_config() {
  FeatureConfig c;
  c.feature_channels = 4;
  c.enhanced_channels = 6;
  return c;
}

ParamStore feature_params(const FeatureConfig& config, std::uint64_t seed = 1) {
  Rng rng(seed);
  ParamStore store;
  init_encoder_params(store, config, rng);
  init_fusion_params(store, config, rng);
  init_attention_params(store, config, rng);
  return store;
}

FeaturePyramid random_pyramid(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  FeaturePyramid p;
  for (std::size_t l = 0; l < 3; ++l) p.levels[l] = testing::random_tensor(rng, {h >> l, w >> l, c});
  return p;
}

// Circular shift of every level by (dx >> l) columns: out(x) = in(x - dx).
FeaturePyramid shifted(const FeaturePyramid& p, std::size_t dx) {
  FeaturePyramid out;
  for (std::size_t l = 0; l < 3; ++l) {
    const Tensor& t = p.levels[l];
    const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2), s = dx >> l;
    std::vector<double> v(t.numel());
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t k = 0; k < c; ++k) v[(y * w + x) * c + k] = t[(y * w + (x + w - s) % w) * c + k];
    out.levels[l] = Tensor::constant(t.shape(), v);
  }
  return out;
}

double cosine(const Tensor& a, std::size_t ia, const Tensor& b, std::size_t ib) {
  const std::size_t c = a.dim(2);
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < c; ++k) {
    ab += a[ia * c + k] * b[ib * c + k];
    aa += a[ia * c + k] * a[ia * c + k];
    bb += b[ib * c + k] * b[ib * c + k];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("encode produces a three-level pyramid") {
  const FeatureConfig config = small_config();
  const ParamStore params = feature_params(config);
  Rng rng(2);
  const Tensor img = testing::random_tensor(rng, {64, 64, 3}, 0, 1);
  const FeaturePyramid p = encode(img, params);
  CHECK(p.levels[0].shape() == Shape{32, 32, 4});
  CHECK(p.levels[1].shape() == Shape{16, 16, 4});
  CHECK(p.levels[2].shape() == Shape{8, 8, 4});
  const FeaturePyramid q = encode(img, params, PyramidRole::kReference);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(std::equal(p.levels[l].values().begin(), p.levels[l].values().end(), q.levels[l].values().begin()));
  }
  CHECK(q.role == PyramidRole::kReference);
  CHECK_THROWS_AS(encode(Tensor::zeros({20, 16, 3}), params), ValidationError);
  CHECK_THROWS_AS(encode(Tensor::zeros({16, 16, 1}), params), ValidationError);
}

TEST_CASE("constant image encodes to spatially constant interiors") {
  const FeatureConfig config = small_config();
  const ParamStore params = feature_params(config);
  const FeaturePyramid p = encode(Tensor::full({64, 64, 3}, 0.4), params);
  // At stride 2 the zero padding only reaches the first row and column.
  for (std::size_t l = 0; l < 3; ++l) {
    const Tensor& t = p.levels[l];
    const std::size_t n = t.dim(0), c = t.dim(2), rim = 1;
    const std::size_t ref = (rim * n + rim) * c;
    for (std::size_t y = rim; y + 1 < n; ++y)
      for (std::size_t x = rim; x + 1 < n; ++x)
        for (std::size_t k = 0; k < c; ++k) CHECK(std::fabs(t[(y * n + x) * c + k] - t[ref + k]) < 1e-12);
  }
}

TEST_CASE("self-matching is the identity with unit score") {
  Rng rng(3);
  const FeaturePyramid p = random_pyramid(rng, 32, 32, 5);
  const MatchMap m = match(p, p, 4, 2);
  for (std::size_t l = 0; l < 3; ++l) {
    const MatchLevel& lv = m.levels[l];
    for (std::size_t i = 0; i < lv.height * lv.width; ++i) {
      CHECK(lv.u[i] == i % lv.width);
      CHECK(lv.v[i] == i / lv.width);
      CHECK(lv.score[i] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("circular shift is recovered on every level") {
  Rng rng(4);
  const FeaturePyramid input = random_pyramid(rng, 64, 64, 6);
  const FeaturePyramid ref = shifted(input, 8);
  const MatchMap m = match(input, ref, 4, 2);
  for (std::size_t l = 0; l < 3; ++l) {
    const MatchLevel& lv = m.levels[l];
    const std::size_t s = 8 >> l;
    for (std::size_t y = 0; y < lv.height; ++y) {
      for (std::size_t x = 0; x + s < lv.width; ++x) {
        const std::size_t i = y * lv.width + x;
        CHECK(lv.u[i] == x + s);
        CHECK(lv.v[i] == y);
        CHECK(lv.score[i] >= 0.999);
      }
    }
  }
}

TEST_CASE("match scores equal recomputed cosine similarity and refinement never loses") {
  Rng rng(5);
  const FeaturePyramid a = random_pyramid(rng, 32, 32, 3);
  const FeaturePyramid b = random_pyramid(rng, 32, 32, 3);
  const MatchMap m = match(a, b, 2, 1);
  for (std::size_t l = 0; l < 3; ++l) {
    const MatchLevel& lv = m.levels[l];
    for (std::size_t i = 0; i < lv.height * lv.width; ++i) {
      REQUIRE(lv.u[i] < lv.width);
      REQUIRE(lv.v[i] < lv.height);
      const double s = cosine(a.levels[l], i, b.levels[l], lv.v[i] * lv.width + lv.u[i]);
      CHECK(std::fabs(lv.score[i] - s) <= 1e-12);
      CHECK(lv.score[i] >= lv.seed_score[i] - 1e-12);
    }
  }
}

TEST_CASE("orthogonal feature fields give non-positive scores") {
  FeaturePyramid a, b;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t n = 16 >> l;
    std::vector<double> va(n * n * 2, 0.0), vb(n * n * 2, 0.0);
    for (std::size_t p = 0; p < n * n; ++p) {
      va[p * 2] = 1.0 + static_cast<double>(p % 3);
      vb[p * 2 + 1] = 0.5 + static_cast<double>(p % 5);
    }
    a.levels[l] = Tensor::constant({n, n, 2}, va);
    b.levels[l] = Tensor::constant({n, n, 2}, vb);
  }
  const MatchMap m = match(a, b, 4, 2);
  for (const MatchLevel& lv : m.levels) {
    for (std::size_t i = 0; i < lv.score.size(); ++i) {
      CHECK(lv.score[i] <= 0.0);
      CHECK(lv.u[i] < lv.width);
      CHECK(lv.v[i] < lv.height);
    }
  }
}

TEST_CASE("match validates its arguments") {
  Rng rng(6);
  const FeaturePyramid a = random_pyramid(rng, 16, 16, 3);
  const FeaturePyramid b = random_pyramid(rng, 16, 16, 4);
  CHECK_THROWS_AS(match(a, b, 4, 2), ValidationError);
  CHECK_THROWS_AS(match(a, a, 0, 2), ValidationError);
  CHECK_THROWS_AS(match(a, a, 4, -1), ValidationError);
}

TEST_CASE("warp_by_match scales by the clamped score") {
  Rng rng(7);
  const FeaturePyramid ref = random_pyramid(rng, 16, 16, 3);
  MatchMap m = match(ref, ref, 4, 2);
  FeaturePyramid w = warp_by_match(ref, m);
  CHECK(w.role == PyramidRole::kWarpedReference);
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t i = 0; i < ref.levels[l].numel(); ++i) {
      CHECK(w.levels[l][i] == doctest::Approx(ref.levels[l][i]).epsilon(1e-12));
    }
  }
  for (auto& lv : m.levels) std::fill(lv.score.begin(), lv.score.end(), 1.0);
  w = warp_by_match(ref, m);
  CHECK(std::equal(w.levels[0].values().begin(), w.levels[0].values().end(), ref.levels[0].values().begin()));
  for (auto& lv : m.levels) std::fill(lv.score.begin(), lv.score.end(), 0.5);
  w = warp_by_match(ref, m);
  for (std::size_t i = 0; i < ref.levels[1].numel(); ++i) CHECK(w.levels[1][i] == 0.5 * ref.levels[1][i]);
  for (auto& lv : m.levels) std::fill(lv.score.begin(), lv.score.end(), -0.3);
  w = warp_by_match(ref, m);
  for (const Tensor& t : w.levels)
    for (double v : t.values()) CHECK(v == 0.0);
  m.levels[2].u[0] = 99;
  CHECK_THROWS_AS(warp_by_match(ref, m), ValidationError);
}

TEST_CASE("fuse output shape and ablated warped branch") {
  const FeatureConfig config = small_config();
  const ParamStore params = feature_params(config);
  Rng rng(8);
  const FeaturePyramid input = random_pyramid(rng, 32, 32, 4);
  const FeaturePyramid ref_a = random_pyramid(rng, 32, 32, 4);
  const FeaturePyramid ref_b = random_pyramid(rng, 32, 32, 4);
  MatchMap m = match(input, ref_a, 4, 2);
  for (auto& lv : m.levels) std::fill(lv.score.begin(), lv.score.end(), 0.0);
  const Tensor fa = fuse(input, warp_by_match(ref_a, m), params);
  const Tensor fb = fuse(input, warp_by_match(ref_b, m), params);
  CHECK(fa.shape() == Shape{16, 16, 6});
  CHECK(std::equal(fa.values().begin(), fa.values().end(), fb.values().begin()));
  const FeaturePyramid wrong = random_pyramid(rng, 32, 32, 3);
  CHECK_THROWS(fuse(input, wrong, params));
}

TEST_CASE("uniform attention averages the window values") {
  const std::size_t c = 3;
  ParamStore params;
  std::vector<double> eye(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i) eye[i * c + i] = 1.0;
  params.add("blk.q", {c, c}, std::vector<double>(c * c, 0.0));
  params.add("blk.k", {c, c}, eye);
  params.add("blk.v", {c, c}, eye);
  params.add("blk.o", {c, c}, eye);
  Rng rng(9);
  const Tensor x = testing::random_tensor(rng, {4, 4, c});
  const Tensor ctx[] = {x};
  Tensor weights;
  const Tensor y = windowed_attention(x, ctx, params, "blk", 4, &weights);
  CHECK(weights.shape() == Shape{1, 16, 16});
  for (double w : weights.values()) CHECK(w == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
  std::vector<double> mean(c, 0.0);
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t k = 0; k < c; ++k) mean[k] += x[p * c + k] / 16.0;
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t k = 0; k < c; ++k) CHECK(y[p * c + k] == doctest::Approx(x[p * c + k] + mean[k]).epsilon(1e-12));
  CHECK_THROWS_AS(windowed_attention(x, ctx, params, "blk", 3), ValidationError);
}

TEST_CASE("attention rows sum to one and the exchange is symmetric") {
  const FeatureConfig config = small_config();
  const ParamStore params = feature_params(config);
  Rng rng(10);
  const Tensor a = testing::random_tensor(rng, {8, 8, 6});
  const Tensor b = testing::random_tensor(rng, {8, 8, 6});
  const Tensor ctx[] = {a, b};
  Tensor weights;
  windowed_attention(a, ctx, params, "attention.cross", 4, &weights);
  CHECK(weights.shape() == Shape{4, 16, 32});
  for (std::size_t r = 0; r < 4 * 16; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 32; ++k) s += weights[r * 32 + k];
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
  const Tensor ab[] = {a, b};
  const Tensor ba[] = {b, a};
  const auto out_ab = cross_view_exchange(ab, params, 4);
  const auto out_ba = cross_view_exchange(ba, params, 4);
  CHECK(out_ab[0].shape() == a.shape());
  CHECK(std::equal(out_ab[0].values().begin(), out_ab[0].values().end(), out_ba[1].values().begin()));
  CHECK(std::equal(out_ab[1].values().begin(), out_ab[1].values().end(), out_ba[0].values().begin()));
  const Tensor one[] = {a};
  CHECK_THROWS_AS(cross_view_exchange(one, params, 4), ValidationError);
}

TEST_CASE("encoder, fusion and attention pass gradient checks") {
  const FeatureConfig config{2, 3, 2, 1, 2};
  Rng rng(11);
  const Tensor img = testing::random_tensor(rng, {16, 16, 3}, 0, 1);
  const Tensor ref_img = testing::random_tensor(rng, {16, 16, 3}, 0, 1);

  ParamStore enc;
  init_encoder_params(enc, config, rng);
  double err = check_gradients(
      [&](const ParamStore& s) {
        const FeaturePyramid p = encode(img, s);
        Tensor total = Tensor::scalar(0.0);
        for (const Tensor& t : p.levels) total = ops::add(total, ops::sum(ops::mul(t, testing::readout(t, 1))));
        return total;
      },
      enc);
  CHECK(err < 1e-4);

  ParamStore fus;
  init_encoder_params(fus, config, rng);
  init_fusion_params(fus, config, rng);
  // Matches are constants of the graph, so they are computed once up front.
  const MatchMap m = match(encode(img, fus), encode(ref_img, fus), 2, 1);
  err = check_gradients(
      [&](const ParamStore& s) {
        const FeaturePyramid in = encode(img, s);
        const FeaturePyramid ref = encode(ref_img, s, PyramidRole::kReference);
        const Tensor y = fuse(in, warp_by_match(ref, m), s);
        return ops::sum(ops::mul(y, testing::readout(y, 2)));
      },
      fus);
  CHECK(err < 1e-4);

  ParamStore att;
  init_attention_params(att, config, rng);
  const Tensor fa = testing::random_tensor(rng, {4, 4, 3});
  const Tensor fb = testing::random_tensor(rng, {4, 4, 3});
  err = check_gradients(
      [&](const ParamStore& s) {
        const Tensor views[] = {fa, fb};
        Tensor total = Tensor::scalar(0.0);
        for (const Tensor& t : cross_view_exchange(views, s, 2)) {
          total = ops::add(total, ops::sum(ops::mul(t, testing::readout(t, 3))));
        }
        return total;
      },
      att);
  CHECK(err < 1e-4);
}
