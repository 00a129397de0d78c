#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "splatforge/depth/depth.hpp"
#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"

using namespace splatforge;

namespace {

CostVolume volume_from_logits(std::size_t h, std::size_t w, std::vector<double> logits) {
  const std::size_t d = logits.size() / (h * w);
  return {Tensor::constant({h, w, d}, std::move(logits)), std::vector<std::uint8_t>(h * w * d, 1)};
}

}  // namespace

TEST_CASE("depth candidates") {
  const DepthCandidates g = DepthCandidates::inverse_uniform(0.5, 100.0, 32);
  CHECK(g.size() == 32);
  CHECK(g.front() == 0.5);
  CHECK(g.back() == 100.0);
  for (std::size_t k = 1; k < g.size(); ++k) {
    CHECK(g.values()[k] > g.values()[k - 1]);
    const double step = 1.0 / g.values()[k - 1] - 1.0 / g.values()[k];
    CHECK(step == doctest::Approx((2.0 - 0.01) / 31.0).epsilon(1e-9));
  }
  CHECK(g.local_spacing(0) == doctest::Approx(g.values()[1] - g.values()[0]));
  CHECK_THROWS_AS(DepthCandidates({1.0}), ValidationError);
  CHECK_THROWS_AS(DepthCandidates({0.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(DepthCandidates({1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(DepthCandidates::inverse_uniform(2.0, 1.0, 4), ValidationError);
}

TEST_CASE("cost volume dot products") {
  const std::size_t h = 2, w = 3, d = 4, c = 4;
  WarpedFeature warped{Tensor::full({h, w, d, c}, 1.0), std::vector<std::uint8_t>(h * w * d, 1)};
  CostVolume v = cost_volume(Tensor::full({h, w, c}, 1.0), warped);
  CHECK(v.scores.shape() == Shape{h, w, d});
  for (double s : v.scores.values()) CHECK(s == 2.0);

  warped.values = Tensor::zeros({h, w, d, c});
  v = cost_volume(Tensor::full({h, w, c}, 1.0), warped);
  for (double s : v.scores.values()) CHECK(s == 0.0);

  CHECK_THROWS_AS(cost_volume(Tensor::zeros({h, w, 3}), warped), ValidationError);
}

TEST_CASE("cost volume argmax finds the planted candidate") {
  Rng rng(3);
  const std::size_t h = 4, w = 5, d = 6, c = 6, planted = 4;
  const Tensor f = testing::random_tensor(rng, {h, w, c});
  std::vector<double> vals(h * w * d * c, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t k = 0; k < c; ++k) vals[(p * d + planted) * c + k] = f[p * c + k];
  }
  const CostVolume v = cost_volume(f, {Tensor::constant({h, w, d, c}, vals), std::vector<std::uint8_t>(h * w * d, 1)});
  for (std::size_t p = 0; p < h * w; ++p) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < d; ++k) {
      if (v.scores[p * d + k] > v.scores[p * d + best]) best = k;
    }
    CHECK(best == planted);
  }
}

TEST_CASE("softmax depth examples") {
  const DepthCandidates g({1.0, 2.0, 4.0});
  Tensor weights;
  Tensor depth = softmax_depth(volume_from_logits(1, 1, {0.0, std::log(2.0), 0.0}), g, MaskedPixelPolicy::kError,
                               &weights);
  CHECK(weights[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(weights[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(depth[0] == doctest::Approx(2.25).epsilon(1e-12));

  depth = softmax_depth(volume_from_logits(1, 1, {0.3, 0.3, 0.3}), g);
  CHECK(depth[0] == doctest::Approx(7.0 / 3.0).epsilon(1e-12));

  depth = softmax_depth(volume_from_logits(1, 1, {0.0, 0.0, 20.0}), g);
  CHECK(std::fabs(depth[0] - 4.0) < 1e-6 * 4.0 + 1e-7);
}

TEST_CASE("softmax depth properties on random volumes") {
  Rng rng(4);
  const DepthCandidates g = DepthCandidates::inverse_uniform(1.0, 10.0, 8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> logits = testing::uniform(rng, 3 * 3 * 8, -5, 5);
    Tensor weights;
    const Tensor a = softmax_depth(volume_from_logits(3, 3, logits), g, MaskedPixelPolicy::kError, &weights);
    for (double& x : logits) x += 3.7;
    const Tensor b = softmax_depth(volume_from_logits(3, 3, logits), g);
    for (std::size_t p = 0; p < 9; ++p) {
      double s = 0.0;
      for (std::size_t k = 0; k < 8; ++k) s += weights[p * 8 + k];
      CHECK(std::fabs(s - 1.0) <= 1e-12);
      CHECK(a[p] >= g.front());
      CHECK(a[p] <= g.back());
      CHECK(std::fabs(a[p] - b[p]) <= 1e-12);
    }
  }
}

TEST_CASE("masked candidates are excluded") {
  const DepthCandidates g({1.0, 2.0, 4.0});
  CostVolume v = volume_from_logits(1, 2, {0, 0, 50, 0, 0, 0});
  v.mask = {1, 1, 0, 0, 0, 0};
  CHECK_THROWS_AS(softmax_depth(v, g), ValidationError);
  const Tensor d = softmax_depth(v, g, MaskedPixelPolicy::kUniform);
  CHECK(d[0] == doctest::Approx(1.5));
  CHECK(d[1] == doctest::Approx(7.0 / 3.0));
}

TEST_CASE("average_volumes keeps entries valid in any volume") {
  CostVolume a{Tensor::constant({1, 1, 3}, {1, 2, 3}), {1, 0, 0}};
  CostVolume b{Tensor::constant({1, 1, 3}, {3, 5, 7}), {1, 1, 0}};
  const CostVolume vols[] = {a, b};
  const CostVolume m = average_volumes(vols);
  CHECK(m.scores[0] == 2.0);
  CHECK(m.scores[1] == 5.0);
  CHECK(m.scores[2] == 0.0);
  CHECK(m.mask == std::vector<std::uint8_t>{1, 1, 0});
}

TEST_CASE("regress_depth upsamples, refines and clamps") {
  ParamStore params;
  init_depth_params(params);
  const DepthCandidates g({1.0, 2.0, 4.0});
  const Tensor d = regress_depth(volume_from_logits(2, 2, std::vector<double>(12, 0.0)), g, params, 4);
  CHECK(d.shape() == Shape{8, 8});
  for (double v : d.values()) CHECK(v == doctest::Approx(7.0 / 3.0).epsilon(1e-12));

  params.set_values("depth.refine.bias", std::vector<double>{100.0});
  const Tensor clamped = regress_depth(volume_from_logits(2, 2, std::vector<double>(12, 0.0)), g, params, 4);
  for (double v : clamped.values()) CHECK(v == 4.0);
}

TEST_CASE("depth refinement passes gradient checks") {
  Rng rng(5);
  ParamStore params;
  init_depth_params(params);
  params.set_values("depth.refine.weight", testing::uniform(rng, 9, -0.1, 0.1));
  const DepthCandidates g = DepthCandidates::inverse_uniform(1.0, 8.0, 5);
  const CostVolume v = volume_from_logits(3, 3, testing::uniform(rng, 45));
  const double err = check_gradients(
      [&](const ParamStore& s) {
        const Tensor d = regress_depth(v, g, s, 4);
        return ops::sum(ops::mul(d, testing::readout(d, 6)));
      },
      params);
  CHECK(err < 1e-4);
}

TEST_CASE("depth quantises to 16 bits over the candidate range") {
  const DepthCandidates g({1.0, 2.0, 3.0});
  const auto q = depth_to_u16(Tensor::constant({1, 3}, {1.0, 2.0, 3.0}), g);
  CHECK(q[0] == 0);
  CHECK(q[1] == 32768);
  CHECK(q[2] == 65535);
}

TEST_CASE("fronto-parallel checkerboard depth is recovered from raw patches") {
  const oracles::DepthOracleResult r = oracles::run_depth_oracle();
  CHECK(r.interior_pixels > 1000);
  CHECK(r.fraction_within >= 0.95);
}
