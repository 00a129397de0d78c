#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>

#include "doctest.h"
#include "support.hpp"
#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"
#include "splatforge/numerics/parallel.hpp"

using namespace splatforge;

namespace {

// Registers one random parameter per shape and checks `f` over all of them.
double gradient_error(std::vector<Shape> shapes, const std::function<Tensor(std::vector<Tensor>)>& f,
                      std::uint64_t seed = 7, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  ParamStore store;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::size_t n = shape_numel(shapes[i]);
    store.add("p" + std::to_string(i), shapes[i], testing::uniform(rng, n, lo, hi));
  }
  return check_gradients(
      [&](const ParamStore& s) {
        std::vector<Tensor> xs;
        for (std::size_t i = 0; i < shapes.size(); ++i) xs.push_back(s.get("p" + std::to_string(i)));
        Tensor y = f(xs);
        return ops::sum(ops::mul(y, testing::readout(y, seed + 1)));
      },
      store);
}

}  // namespace

TEST_CASE("tensor construction validates shape and values") {
  CHECK_THROWS_AS(Tensor::constant({2, 2}, {1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(Tensor::constant({1}, {std::numeric_limits<double>::quiet_NaN()}), NumericalError);
  const Tensor t = Tensor::full({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t[5] == 1.5);
  CHECK_FALSE(t.requires_grad());
}

TEST_CASE("grad of sum(w*w) and of a product") {
  ParamStore store;
  store.add("w", {2}, {1, 2});
  const Tensor& w = store.get("w");
  GradientSet g = grad(ops::sum(ops::mul(w, w)), store);
  CHECK(g.at("w")[0] == 2.0);
  CHECK(g.at("w")[1] == 4.0);

  ParamStore pair;
  pair.add("w", {2}, {3, 5});
  const Tensor& v = pair.get("w");
  Tensor prod = ops::mul(ops::slice(v, 0, 0, 1), ops::slice(v, 0, 1, 2));
  g = grad(ops::sum(prod), pair);
  CHECK(g.at("w")[0] == 5.0);
  CHECK(g.at("w")[1] == 3.0);
}

TEST_CASE("unreachable parameter gets a zero gradient of its own shape") {
  ParamStore store;
  store.add("a", {3}, {1, 2, 3});
  store.add("b", {2, 2}, {1, 1, 1, 1});
  GradientSet g = grad(ops::sum(store.get("a")), store);
  REQUIRE(g.at("b").size() == 4);
  for (double v : g.at("b")) CHECK(v == 0.0);
}

TEST_CASE("grad rejects a non-scalar loss") {
  ParamStore store;
  store.add("a", {3}, {1, 2, 3});
  CHECK_THROWS_AS(grad(ops::scale(store.get("a"), 2.0), store), ValidationError);
}

TEST_CASE("non-finite forward values are surfaced") {
  ParamStore store;
  store.add("a", {2}, {0.0, 1.0});
  CHECK_THROWS_AS(ops::sqrt(ops::scale(store.get("a"), -1.0)), NumericalError);
  CHECK_THROWS_AS(ops::exp(Tensor::constant({1}, {1000.0})), NumericalError);
}

TEST_CASE("adam first step is -lr * g / (|g| + eps)") {
  ParamStore store;
  store.add("w", {3}, {0.5, -1.0, 2.0});
  const Tensor& w = store.get("w");
  const Tensor coef = Tensor::constant({3}, {0.3, -2.0, 7.0});
  grad(ops::sum(ops::mul(w, coef)), store);
  AdamConfig config;
  adam_step(store, config);
  const std::vector<double> before = {0.5, -1.0, 2.0};
  for (int i = 0; i < 3; ++i) {
    const double g = coef[i];
    CHECK(store.get("w")[i] - before[i] == doctest::Approx(-config.lr * g / (std::fabs(g) + config.eps)).epsilon(1e-9));
  }
  CHECK(store.step_count() == 1);
  for (double g : store.get("w").grad()) CHECK(g == 0.0);
}

TEST_CASE("adam leaves zero-gradient parameters alone and validates its config") {
  ParamStore store;
  store.add("a", {2}, {1.0, 2.0});
  store.add("b", {1}, {3.0});
  grad(ops::sum(store.get("a")), store);
  adam_step(store, {});
  CHECK(store.get("b")[0] == 3.0);
  CHECK_THROWS_AS(adam_step(store, {.lr = 0.0}), ValidationError);
  CHECK_THROWS_AS(adam_step(store, {.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 0.0}), ValidationError);
}

TEST_CASE("adam with a constant gradient does not grow its step") {
  ParamStore store;
  store.add("w", {1}, {0.0});
  const Tensor c = Tensor::constant({1}, {0.7});
  std::vector<double> positions = {0.0};
  for (int i = 0; i < 2; ++i) {
    grad(ops::sum(ops::mul(store.get("w"), c)), store);
    adam_step(store, {});
    positions.push_back(store.get("w")[0]);
  }
  const double first = std::fabs(positions[1] - positions[0]);
  const double second = std::fabs(positions[2] - positions[1]);
  CHECK(second <= first + 1e-9);
}

TEST_CASE("adam trajectories are bit-identical across runs") {
  auto run = [] {
    Rng rng(3);
    ParamStore store;
    store.add("w", {4, 3}, testing::uniform(rng, 12));
    const Tensor target = testing::random_tensor(rng, {4, 3});
    for (int i = 0; i < 20; ++i) {
      grad(ops::mse(ops::tanh(store.get("w")), target), store);
      adam_step(store, {.lr = 1e-2});
    }
    return std::vector<double>(store.get("w").values().begin(), store.get("w").values().end());
  };
  CHECK(run() == run());
}

TEST_CASE("check_gradients on a quadratic and a constant") {
  ParamStore store;
  store.add("x", {3}, {0.2, -0.4, 1.1});
  const Tensor a = Tensor::constant({3}, {2.0, 3.0, -1.0});
  double err = check_gradients([&](const ParamStore& s) { return ops::sum(ops::mul(a, ops::square(s.get("x")))); },
                               store);
  CHECK(err < 1e-6);
  err = check_gradients([](const ParamStore&) { return Tensor::scalar(4.0); }, store);
  CHECK(err == 0.0);
}

TEST_CASE("check_gradients rejects a non-deterministic function") {
  ParamStore store;
  store.add("x", {1}, {1.0});
  int calls = 0;
  CHECK_THROWS_AS(check_gradients(
                      [&](const ParamStore& s) { return ops::add_scalar(ops::sum(s.get("x")), ++calls); }, store),
                  ValidationError);
}

TEST_CASE("elementwise ops pass gradient checks") {
  using V = std::vector<Tensor>;
  CHECK(gradient_error({{3, 4}, {3, 4}}, [](V x) { return ops::add(x[0], x[1]); }) < 1e-6);
  CHECK(gradient_error({{3, 4}, {3, 4}}, [](V x) { return ops::sub(x[0], x[1]); }) < 1e-6);
  CHECK(gradient_error({{3, 4}, {3, 4}}, [](V x) { return ops::mul(x[0], x[1]); }) < 1e-6);
  CHECK(gradient_error({{5}}, [](V x) { return ops::add_scalar(x[0], 0.3); }) < 1e-6);
  CHECK(gradient_error({{5}}, [](V x) { return ops::scale(x[0], -1.7); }) < 1e-6);
  CHECK(gradient_error({{2, 3, 4}, {4}}, [](V x) { return ops::add_bias(x[0], x[1]); }) < 1e-6);
  CHECK(gradient_error({{2, 3, 4}, {2, 3, 1}}, [](V x) { return ops::mul_bcast_last(x[0], x[1]); }) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::tanh(x[0]); }) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::sigmoid(x[0]); }) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::softplus(x[0]); }) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::exp(x[0]); }) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::square(x[0]); }) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::abs(x[0]); }) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::sqrt(x[0]); }, 7, 0.5, 2.0) < 1e-6);
  CHECK(gradient_error({{6}}, [](V x) { return ops::clamp(x[0], -0.5, 0.5); }) < 1e-6);
}

TEST_CASE("reductions and shape ops pass gradient checks") {
  using V = std::vector<Tensor>;
  CHECK(gradient_error({{3, 4}}, [](V x) { return ops::sum(x[0]); }) < 1e-6);
  CHECK(gradient_error({{3, 4}}, [](V x) { return ops::mean(x[0]); }) < 1e-6);
  CHECK(gradient_error({{3, 4}}, [](V x) { return ops::mean_last(x[0]); }) < 1e-6);
  CHECK(gradient_error({{3, 4}}, [](V x) { return ops::reshape(x[0], {2, 6}); }) < 1e-6);
  CHECK(gradient_error({{2, 3, 2}, {2, 3, 4}}, [](V x) { return ops::concat(x, 2); }) < 1e-6);
  CHECK(gradient_error({{2, 3}, {4, 3}}, [](V x) { return ops::concat(x, 0); }) < 1e-6);
  CHECK(gradient_error({{4, 5, 2}}, [](V x) { return ops::slice(x[0], 1, 1, 4); }) < 1e-6);
  const std::vector<std::size_t> rows = {2, 0, 2, 1};
  CHECK(gradient_error({{3, 2}}, [&](V x) { return ops::gather_rows(x[0], rows); }) < 1e-6);
  CHECK(gradient_error({{2, 3, 4}}, [](V x) { return ops::transpose_last2(x[0]); }) < 1e-6);
}

TEST_CASE("linear algebra ops pass gradient checks") {
  using V = std::vector<Tensor>;
  CHECK(gradient_error({{3, 4}, {4, 2}}, [](V x) { return ops::matmul(x[0], x[1]); }) < 1e-6);
  CHECK(gradient_error({{2, 3, 4}, {4, 5}, {5}}, [](V x) { return ops::linear(x[0], x[1], x[2]); }) < 1e-6);
  CHECK(gradient_error({{2, 3, 4}, {4, 5}}, [](V x) { return ops::linear(x[0], x[1], Tensor()); }) < 1e-6);
  CHECK(gradient_error({{2, 3, 4}, {2, 4, 2}}, [](V x) { return ops::bmm(x[0], x[1]); }) < 1e-6);
}

TEST_CASE("softmax, conv and resampling ops pass gradient checks") {
  using V = std::vector<Tensor>;
  CHECK(gradient_error({{3, 5}}, [](V x) { return ops::softmax_last(x[0]); }) < 1e-6);
  const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 1, 1, 0, 0};
  CHECK(gradient_error({{2, 4}}, [&](V x) { return ops::softmax_last(x[0], mask); }) < 1e-6);
  CHECK(gradient_error({{6, 6, 2}, {3, 3, 2, 3}, {3}}, [](V x) { return ops::conv2d(x[0], x[1], x[2], 1, 1); }) <
        1e-6);
  CHECK(gradient_error({{8, 6, 2}, {3, 3, 2, 3}, {3}}, [](V x) { return ops::conv2d(x[0], x[1], x[2], 2, 1); }) <
        1e-6);
  CHECK(gradient_error({{4, 3, 2}}, [](V x) { return ops::pad_replicate(x[0], 2); }) < 1e-6);
  CHECK(gradient_error({{4, 3, 2}}, [](V x) { return ops::resize_bilinear(x[0], 8, 6); }) < 1e-6);
  CHECK(gradient_error({{8, 6, 2}}, [](V x) { return ops::resize_bilinear(x[0], 4, 3); }) < 1e-6);
  const std::vector<ops::SamplePoint> points = {{0.3, 0.7}, {2.0, 1.0}, {-0.4, 2.9}, {2.45, 3.2}};
  CHECK(gradient_error({{4, 3, 2}}, [&](V x) { return ops::sample_bilinear(x[0], points); }) < 1e-6);
  CHECK(gradient_error({{3, 4}}, [](V x) { return ops::normalize_rows(x[0]); }) < 1e-6);
}

TEST_CASE("gradient shapes equal parameter shapes for broadcast ops") {
  ParamStore store;
  store.add("x", {2, 3, 4}, std::vector<double>(24, 0.5));
  store.add("b", {4}, {1, 2, 3, 4});
  store.add("s", {2, 3, 1}, std::vector<double>(6, 2.0));
  Tensor y = ops::mul_bcast_last(ops::add_bias(store.get("x"), store.get("b")), store.get("s"));
  GradientSet g = grad(ops::sum(y), store);
  CHECK(g.at("x").size() == 24);
  CHECK(g.at("b").size() == 4);
  CHECK(g.at("s").size() == 6);
  CHECK(g.at("b")[0] == doctest::Approx(12.0));
}

TEST_CASE("softmax masks, conv shape and sampling validity") {
  const Tensor x = Tensor::constant({1, 3}, {1.0, 5.0, 2.0});
  const std::vector<std::uint8_t> mask = {1, 0, 1};
  const Tensor p = ops::softmax_last(x, mask);
  CHECK(p[1] == 0.0);
  CHECK(p[0] + p[2] == doctest::Approx(1.0));
  const std::vector<std::uint8_t> none = {0, 0, 0};
  CHECK_THROWS(ops::softmax_last(x, none));

  const Tensor img = Tensor::constant({2, 2, 1}, {1, 2, 3, 4});
  std::vector<std::uint8_t> valid;
  const std::vector<ops::SamplePoint> pts = {{1.0, 1.0}, {0.5, 0.5}, {-0.6, 0.0}, {1.5, 1.5}};
  const Tensor s = ops::sample_bilinear(img, pts, &valid);
  CHECK(s[0] == 4.0);
  CHECK(s[1] == doctest::Approx(2.5));
  CHECK(s[2] == 0.0);
  CHECK(valid == std::vector<std::uint8_t>{1, 1, 0, 1});
  CHECK(s[3] == doctest::Approx(1.0));  // only the (1,1) tap is on the grid, weight 1/4

  Rng rng(1);
  const Tensor w = testing::random_tensor(rng, {3, 3, 1, 4});
  CHECK(ops::conv2d(img, w, Tensor(), 1, 1).shape() == Shape{2, 2, 4});
  CHECK_THROWS_AS(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ValidationError);
}

TEST_CASE("params save and load round trip") {
  const auto path = std::filesystem::temp_directory_path() / "splatforge_params_test.json";
  ParamStore a;
  a.add("x", {2}, {0.125, -3.0});
  a.add("y", {1, 1}, {1e-17});
  save_params(a, path);
  ParamStore b;
  b.add("x", {2}, {0, 0});
  b.add("y", {1, 1}, {0});
  load_params(b, path);
  CHECK(b.get("x")[1] == -3.0);
  CHECK(b.get("y")[0] == 1e-17);
  ParamStore wrong;
  wrong.add("x", {3}, {0, 0, 0});
  wrong.add("y", {1, 1}, {0});
  CHECK_THROWS_AS(load_params(wrong, path), ValidationError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_params(b, path), IoError);
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK(worker_count() >= 1);
}
