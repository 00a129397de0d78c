#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "splatforge/errors.hpp"
#include "splatforge/numerics/ops.hpp"
#include "splatforge/numerics/parallel.hpp"
#include "splatforge/render/render.hpp"

namespace splatforge {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

// Everything the backward pass needs to revisit one projection.
struct Projected {
  bool visible = false;
  Eigen::Vector3d t;        // camera-frame mean
  Eigen::Vector4d q_hat;    // normalised rotation
  double q_norm = 1.0;
  Eigen::Vector3d s;
  Eigen::Matrix3d r;        // rotation_from_quaternion(q_hat)
  Eigen::Matrix3d sigma_cam;
  Mat23 j;
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
  Eigen::Matrix2d conic;
  double depth = 0.0;
  int radius = 0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel box
};

Projected project(const Eigen::Vector3d& mu, const Eigen::Vector4d& q, const Eigen::Vector3d& s, const Camera& cam) {
  Projected p;
  const Eigen::Matrix3d w = cam.rotation();
  p.t = w * mu + cam.translation();
  if (!(p.t.z() > kNearPlane)) return p;
  p.q_norm = q.norm();
  if (!(p.q_norm > 1e-12)) throw NumericalError("rasterize: zero-length rotation quaternion");
  p.q_hat = q / p.q_norm;
  p.s = s;
  p.r = rotation_from_quaternion(p.q_hat);
  const Eigen::Matrix3d sigma = p.r.transpose() * s.array().square().matrix().asDiagonal() * p.r;
  p.sigma_cam = w * sigma * w.transpose();
  const double tx = p.t.x(), ty = p.t.y(), tz = p.t.z();
  p.j << cam.fx() / tz, 0.0, -cam.fx() * tx / (tz * tz), 0.0, cam.fy() / tz, -cam.fy() * ty / (tz * tz);
  p.cov = p.j * p.sigma_cam * p.j.transpose();
  p.cov(0, 1) = p.cov(1, 0) = 0.5 * (p.cov(0, 1) + p.cov(1, 0));
  p.cov += kSigmaFloor * Eigen::Matrix2d::Identity();
  const double det = p.cov(0, 0) * p.cov(1, 1) - p.cov(0, 1) * p.cov(1, 0);
  if (!(det > 0.0)) throw NumericalError("rasterize: singular projected covariance");
  p.conic << p.cov(1, 1) / det, -p.cov(0, 1) / det, -p.cov(0, 1) / det, p.cov(0, 0) / det;
  p.mean = {cam.cx() + cam.fx() * tx / tz, cam.cy() + cam.fy() * ty / tz};
  p.depth = tz;
  const double mid = 0.5 * (p.cov(0, 0) + p.cov(1, 1));
  const double lambda = mid + std::sqrt(std::max(0.0, mid * mid - det));
  const double radius = std::ceil(3.0 * std::sqrt(lambda));
  if (!std::isfinite(radius) || radius > 1e6) return p;
  p.radius = static_cast<int>(radius);
  p.x0 = std::max(0, static_cast<int>(std::floor(p.mean.x() - radius)));
  p.x1 = std::min(cam.width() - 1, static_cast<int>(std::ceil(p.mean.x() + radius)));
  p.y0 = std::max(0, static_cast<int>(std::floor(p.mean.y() - radius)));
  p.y1 = std::min(cam.height() - 1, static_cast<int>(std::ceil(p.mean.y() + radius)));
  p.visible = p.x0 <= p.x1 && p.y0 <= p.y1;
  return p;
}

struct Primitives {
  std::span<const double> means, rotations, scales, opacities, colors;

  Eigen::Vector3d mean(std::size_t i) const { return {means[i * 3], means[i * 3 + 1], means[i * 3 + 2]}; }
  Eigen::Vector4d rotation(std::size_t i) const {
    return {rotations[i * 4], rotations[i * 4 + 1], rotations[i * 4 + 2], rotations[i * 4 + 3]};
  }
  Eigen::Vector3d scale(std::size_t i) const { return {scales[i * 3], scales[i * 3 + 1], scales[i * 3 + 2]}; }
  Eigen::Vector3d color(std::size_t i) const { return {colors[i * 3], colors[i * 3 + 1], colors[i * 3 + 2]}; }
};

// alpha' of fragment p at pixel (x, y); `raw` is opacity * gaussian before the clamp.
struct Weight {
  double alpha;
  double gauss;
  double raw;
  Eigen::Vector2d d;
};

Weight weight_at(const Projected& p, double opacity, int x, int y) {
  Weight w;
  w.d = Eigen::Vector2d(x, y) - p.mean;
  const double power = w.d.dot(p.conic * w.d);
  w.gauss = std::exp(-0.5 * power);
  w.raw = opacity * w.gauss;
  w.alpha = std::min(kMaxAlpha, w.raw);
  return w;
}

bool covers(const Projected& p, int x, int y) { return x >= p.x0 && x <= p.x1 && y >= p.y0 && y <= p.y1; }

struct Tile {
  int x0, y0, x1, y1;  // exclusive upper bounds
  std::vector<std::uint32_t> list;
};

struct RasterState {
  int width = 0, height = 0;
  std::vector<Projected> proj;
  std::vector<Tile> tiles;
  std::vector<double> final_t;      // per pixel
  std::vector<std::uint32_t> last;  // per pixel: fragments visited in its tile list
};

// Per-fragment screen-space gradients.
struct FragmentGrad {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();  // full-matrix convention
  double opacity = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

// dR/dq contracted with G: returns sum_ij G_ij dR_ij/dq.
Eigen::Vector4d rotation_grad(const Eigen::Matrix3d& g, const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Vector4d out;
  out[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  out[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                w * g(2, 1) - 2 * x * g(2, 2));
  out[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                z * g(2, 1) - 2 * y * g(2, 2));
  out[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                x * g(2, 0) + y * g(2, 1));
  return out;
}

}  // namespace

std::optional<SplatFragment> project_gaussian(const GaussianPrimitive& g, const Camera& cam) {
  const Projected p = project(g.mean, g.rotation, g.scale, cam);
  if (!p.visible) return std::nullopt;
  SplatFragment f;
  f.mean = p.mean;
  f.cov = p.cov;
  f.depth = p.depth;
  f.opacity = g.opacity;
  f.color = g.color;
  f.radius = p.radius;
  return f;
}

RenderOutput rasterize(const GaussianSet& set, const Camera& cam) {
  const int width = cam.width(), height = cam.height();
  const std::size_t npix = static_cast<std::size_t>(width) * height;
  if (set.empty()) {
    return {Tensor::zeros({static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3}),
            Tensor::zeros({static_cast<std::size_t>(height), static_cast<std::size_t>(width)})};
  }
  validate(set);
  const std::size_t n = set.size();
  const Primitives prim{set.means.values(), set.rotations.values(), set.scales.values(), set.opacities.values(),
                        set.colors.values()};

  auto state = std::make_shared<RasterState>();
  state->width = width;
  state->height = height;
  state->proj.resize(n);
  parallel_for(n, [&](std::size_t i) { state->proj[i] = project(prim.mean(i), prim.rotation(i), prim.scale(i), cam); });

  // Fragment order: view depth, then original index.
  std::vector<std::uint32_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (state->proj[i].visible) order.push_back(static_cast<std::uint32_t>(i));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return state->proj[a].depth < state->proj[b].depth; });

  const int tiles_x = (width + kTileSize - 1) / kTileSize, tiles_y = (height + kTileSize - 1) / kTileSize;
  state->tiles.resize(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      state->tiles[ty * tiles_x + tx] = {tx * kTileSize, ty * kTileSize, std::min(width, (tx + 1) * kTileSize),
                                         std::min(height, (ty + 1) * kTileSize), {}};
    }
  }
  for (std::uint32_t i : order) {
    const Projected& p = state->proj[i];
    for (int ty = p.y0 / kTileSize; ty <= p.y1 / kTileSize; ++ty) {
      for (int tx = p.x0 / kTileSize; tx <= p.x1 / kTileSize; ++tx) state->tiles[ty * tiles_x + tx].list.push_back(i);
    }
  }

  std::vector<double> out(npix * 4, 0.0);
  state->final_t.assign(npix, 1.0);
  state->last.assign(npix, 0);
  parallel_for(state->tiles.size(), [&](std::size_t t) {
    const Tile& tile = state->tiles[t];
    for (int y = tile.y0; y < tile.y1; ++y) {
      for (int x = tile.x0; x < tile.x1; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * width + x;
        double trans = 1.0;
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        std::uint32_t k = 0;
        for (; k < tile.list.size() && trans >= kMinTransmittance; ++k) {
          const std::uint32_t i = tile.list[k];
          const Projected& p = state->proj[i];
          if (!covers(p, x, y)) continue;
          const Weight wt = weight_at(p, prim.opacities[i], x, y);
          c += prim.color(i) * (wt.alpha * trans);
          trans *= 1.0 - wt.alpha;
        }
        state->final_t[pix] = trans;
        state->last[pix] = k;
        for (int ch = 0; ch < 3; ++ch) out[pix * 4 + ch] = c[ch];
        out[pix * 4 + 3] = 1.0 - trans;
      }
    }
  });

  const Tensor means = set.means, rotations = set.rotations, scales = set.scales, opacities = set.opacities,
               colors = set.colors;
  const Camera camera = cam;
  Tensor combined = detail::make_result(
      "rasterize", {static_cast<std::size_t>(height), static_cast<std::size_t>(width), 4}, std::move(out),
      {means, rotations, scales, opacities, colors}, [=](std::span<const double> g) {
        const RasterState& st = *state;
        const Primitives pr{means.values(), rotations.values(), scales.values(), opacities.values(), colors.values()};

        // Screen-space pass, one buffer per tile, merged in tile order.
        std::vector<std::vector<FragmentGrad>> tile_grads(st.tiles.size());
        parallel_for(st.tiles.size(), [&](std::size_t t) {
          const Tile& tile = st.tiles[t];
          auto& buf = tile_grads[t];
          buf.assign(tile.list.size(), FragmentGrad{});
          for (int y = tile.y0; y < tile.y1; ++y) {
            for (int x = tile.x0; x < tile.x1; ++x) {
              const std::size_t pix = static_cast<std::size_t>(y) * st.width + x;
              const Eigen::Vector3d g_c(g[pix * 4], g[pix * 4 + 1], g[pix * 4 + 2]);
              const double g_a = g[pix * 4 + 3];
              const double t_final = st.final_t[pix];
              double trans = t_final;
              Eigen::Vector3d behind = Eigen::Vector3d::Zero();
              for (std::uint32_t k = st.last[pix]; k-- > 0;) {
                const std::uint32_t i = tile.list[k];
                const Projected& p = st.proj[i];
                if (!covers(p, x, y)) continue;
                const Weight wt = weight_at(p, pr.opacities[i], x, y);
                const double one_minus = 1.0 - wt.alpha;
                const double t_i = trans / one_minus;
                const Eigen::Vector3d ci = pr.color(i);
                FragmentGrad& fg = buf[k];
                fg.color += g_c * (wt.alpha * t_i);
                const double d_alpha = g_c.dot(ci * t_i - behind / one_minus) + g_a * t_final / one_minus;
                behind += ci * (wt.alpha * t_i);
                trans = t_i;
                if (wt.raw > kMaxAlpha) continue;
                fg.opacity += d_alpha * wt.gauss;
                const double d_power = -0.5 * pr.opacities[i] * wt.gauss * d_alpha;
                fg.conic += d_power * (wt.d * wt.d.transpose());
                fg.mean += d_power * (-2.0 * (p.conic * wt.d));
              }
            }
          }
        });

        const std::size_t count = st.proj.size();
        std::vector<FragmentGrad> total(count);
        for (std::size_t t = 0; t < st.tiles.size(); ++t) {
          const auto& list = st.tiles[t].list;
          for (std::size_t k = 0; k < list.size(); ++k) {
            FragmentGrad& dst = total[list[k]];
            const FragmentGrad& src = tile_grads[t][k];
            dst.mean += src.mean;
            dst.conic += src.conic;
            dst.opacity += src.opacity;
            dst.color += src.color;
          }
        }

        auto gm = detail::grad_sink(means);
        auto gq = detail::grad_sink(rotations);
        auto gs = detail::grad_sink(scales);
        auto go = detail::grad_sink(opacities);
        auto gcol = detail::grad_sink(colors);
        const Eigen::Matrix3d w = camera.rotation();
        const double fx = camera.fx(), fy = camera.fy();
        parallel_for(count, [&](std::size_t i) {
          const Projected& p = st.proj[i];
          if (!p.visible) return;
          const FragmentGrad& fg = total[i];
          if (!go.empty()) go[i] += fg.opacity;
          if (!gcol.empty()) {
            for (int c = 0; c < 3; ++c) gcol[i * 3 + c] += fg.color[c];
          }
          // conic = cov^-1  =>  dL/dcov = -conic G conic
          const Eigen::Matrix2d g_cov = -p.conic * fg.conic * p.conic;
          const Eigen::Matrix3d g_sigma_cam = p.j.transpose() * g_cov * p.j;
          const Mat23 g_j = 2.0 * g_cov * p.j * p.sigma_cam;
          const double tx = p.t.x(), ty = p.t.y(), tz = p.t.z();
          Eigen::Vector3d g_t;
          g_t.x() = fg.mean.x() * fx / tz - g_j(0, 2) * fx / (tz * tz);
          g_t.y() = fg.mean.y() * fy / tz - g_j(1, 2) * fy / (tz * tz);
          g_t.z() = -fg.mean.x() * fx * tx / (tz * tz) - fg.mean.y() * fy * ty / (tz * tz) - g_j(0, 0) * fx / (tz * tz) +
                    g_j(0, 2) * 2.0 * fx * tx / (tz * tz * tz) - g_j(1, 1) * fy / (tz * tz) +
                    g_j(1, 2) * 2.0 * fy * ty / (tz * tz * tz);
          if (!gm.empty()) {
            const Eigen::Vector3d g_mu = w.transpose() * g_t;
            for (int c = 0; c < 3; ++c) gm[i * 3 + c] += g_mu[c];
          }
          const Eigen::Matrix3d g_sigma = w.transpose() * g_sigma_cam * w;
          if (!gs.empty()) {
            const Eigen::Matrix3d rgr = p.r * g_sigma * p.r.transpose();
            for (int c = 0; c < 3; ++c) gs[i * 3 + c] += 2.0 * p.s[c] * rgr(c, c);
          }
          if (!gq.empty()) {
            const Eigen::Matrix3d d2 = p.s.array().square().matrix().asDiagonal();
            const Eigen::Matrix3d g_r = d2 * p.r * (g_sigma + g_sigma.transpose());
            const Eigen::Vector4d g_hat = rotation_grad(g_r, p.q_hat);
            const Eigen::Vector4d g_raw = (g_hat - p.q_hat * p.q_hat.dot(g_hat)) / p.q_norm;
            for (int c = 0; c < 4; ++c) gq[i * 4 + c] += g_raw[c];
          }
        });
      });

  RenderOutput result;
  result.image = ops::slice(combined, 2, 0, 3);
  result.alpha = ops::reshape(ops::slice(combined, 2, 3, 4), {static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  return result;
}

}  // namespace splatforge
