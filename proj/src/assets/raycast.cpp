#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "splatforge/assets/io.hpp"
#include "splatforge/assets/scene.hpp"
#include "splatforge/errors.hpp"
#include "splatforge/numerics/parallel.hpp"

namespace splatforge {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = mix(mix(seed ^ static_cast<std::uint64_t>(ix)) ^ static_cast<std::uint64_t>(iy) * 0x2545F4914F6CDD1DULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(double u, double v, std::uint64_t seed) {
  const double fx = std::floor(u), fy = std::floor(v);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double tx = smooth(u - fx), ty = smooth(v - fy);
  const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

Eigen::Vector3d shade(const TextureSpec& t, double u, double v, std::uint64_t seed) {
  double mixw = 0.0;
  switch (t.kind) {
    case TextureKind::kChecker: {
      const auto k = static_cast<std::int64_t>(std::floor(u / t.period)) + static_cast<std::int64_t>(std::floor(v / t.period));
      mixw = (k % 2 + 2) % 2;
      break;
    }
    case TextureKind::kSine: {
      const double a = t.angle_degrees * std::numbers::pi / 180.0;
      mixw = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (u * std::cos(a) + v * std::sin(a)) / t.period);
      break;
    }
    case TextureKind::kValueNoise: {
      const std::uint64_t s = mix(seed ^ mix(t.seed_offset));
      mixw = (2.0 * value_noise(u / t.period, v / t.period, s) + value_noise(2.0 * u / t.period, 2.0 * v / t.period, s + 1)) / 3.0;
      break;
    }
  }
  return (1.0 - mixw) * t.colors[0] + mixw * t.colors[1];
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  double u = 0, v = 0;
  const ObjectSpec* object = nullptr;
};

constexpr double kEps = 1e-9;

void hit_plane(const ObjectSpec& o, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, Hit& best) {
  const Eigen::Vector3d n = o.normal.normalized();
  const double denom = n.dot(dir);
  if (std::fabs(denom) < 1e-15) return;
  const double t = n.dot(o.center - origin) / denom;
  if (!(t > kEps) || t >= best.t) return;
  const Eigen::Vector3d up = (o.up - o.up.dot(n) * n).normalized();
  const Eigen::Vector3d right = up.cross(n);
  const Eigen::Vector3d rel = origin + t * dir - o.center;
  const double u = rel.dot(right), v = rel.dot(up);
  if (std::fabs(u) > 0.5 * o.size.x() || std::fabs(v) > 0.5 * o.size.y()) return;
  best = {t, u, v, &o};
}

void hit_box(const ObjectSpec& o, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, Hit& best) {
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(o.yaw_degrees * std::numbers::pi / 180.0, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Vector3d lo = rot.transpose() * (origin - o.center);
  const Eigen::Vector3d ld = rot.transpose() * dir;
  const Eigen::Vector3d half = 0.5 * o.size;
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  int axis0 = -1, axis1 = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(ld[a]) < 1e-15) {
      if (std::fabs(lo[a]) > half[a]) return;
      continue;
    }
    double ta = (-half[a] - lo[a]) / ld[a], tb = (half[a] - lo[a]) / ld[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    if (tb < t1) {
      t1 = tb;
      axis1 = a;
    }
  }
  if (t0 > t1) return;
  double t = t0;
  int axis = axis0;
  if (!(t > kEps)) {
    t = t1;
    axis = axis1;
  }
  if (!(t > kEps) || t >= best.t || axis < 0) return;
  const Eigen::Vector3d p = lo + t * ld;
  const int a = (axis + 1) % 3, b = (axis + 2) % 3;
  best = {t, p[a], p[b], &o};
}

Hit trace(const SceneSpec& spec, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  Hit best;
  for (const ObjectSpec& o : spec.objects) {
    if (o.kind == ObjectKind::kPlane) {
      hit_plane(o, origin, dir, best);
    } else {
      hit_box(o, origin, dir, best);
    }
  }
  return best;
}

}  // namespace

Camera spec_camera(const SceneSpec& spec, const CameraPose& pose) {
  return Camera::look_at(spec.focal, spec.focal, (spec.width - 1) / 2.0, (spec.height - 1) / 2.0, spec.width,
                         spec.height, pose.position, pose.look_at);
}

CameraPose default_reference_pose(const SceneSpec& spec) {
  if (spec.cameras.empty()) throw ValidationError("scene has no cameras");
  const CameraPose& mid = spec.cameras[spec.cameras.size() / 2];
  const Eigen::Vector3d back = 1.1 * (mid.position - mid.look_at);
  const double a = 5.0 * std::numbers::pi / 180.0;
  // Rotate about the horizontal axis orthogonal to the viewing direction; -y is up.
  Eigen::Vector3d axis = back.cross(Eigen::Vector3d::UnitY());
  if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d raised = Eigen::AngleAxisd(a, axis.normalized()) * back;
  return {mid.look_at + (raised.y() <= back.y() ? raised : Eigen::AngleAxisd(-a, axis.normalized()) * back), mid.look_at};
}

RenderedView render_scene_view(const SceneSpec& spec, const Camera& cam, std::uint64_t seed) {
  const std::size_t h = cam.height(), w = cam.width();
  const int ss = spec.supersample;
  RenderedView out{Image(h, w, 3), Image(h, w, 1)};
  const Eigen::Matrix3d rt = cam.rotation().transpose();
  const Eigen::Vector3d origin = cam.center();
  parallel_for(h, [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) {
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss - 0.5, py = y + (sy + 0.5) / ss - 0.5;
          const Eigen::Vector3d dir = rt * Eigen::Vector3d((px - cam.cx()) / cam.fx(), (py - cam.cy()) / cam.fy(), 1.0);
          const Hit hit = trace(spec, origin, dir);
          acc += hit.object ? shade(spec.textures.at(hit.object->texture), hit.u, hit.v, seed) : spec.background;
        }
      }
      acc /= static_cast<double>(ss * ss);
      for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = acc[c];
      // Unnormalised camera ray with z = 1, so the hit parameter is the depth.
      const Eigen::Vector3d centre = rt * Eigen::Vector3d((x - cam.cx()) / cam.fx(), (y - cam.cy()) / cam.fy(), 1.0);
      const Hit hit = trace(spec, origin, centre);
      out.depth.at(y, x, 0) = hit.object ? hit.t : 0.0;
    }
  });
  out.color = quantize8(out.color);
  return out;
}

Scene gen_scene(const SceneSpec& spec, std::uint64_t seed, int factor, const std::string& id) {
  validate_factor(factor);
  if (spec.cameras.size() < 3) throw ValidationError("gen_scene needs at least 3 cameras");
  Scene scene;
  scene.id = id;
  scene.description = spec.description;
  scene.factor = factor;
  scene.depth_range = spec.depth_range;
  for (std::size_t i = 0; i < spec.cameras.size(); ++i) {
    const Camera cam = spec_camera(spec, spec.cameras[i]);
    RenderedView r = render_scene_view(spec, cam, seed);
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu", i);
    Image lr = quantize8(box_downsample(r.color, factor));
    scene.views.push_back({name, cam, std::move(r.color), std::move(lr), std::move(r.depth)});
  }
  const std::size_t n = scene.views.size();
  if (spec.splits) {
    scene.splits = *spec.splits;
  } else {
    scene.splits.context = {0, n - 1};
    scene.splits.heldout = {n / 2};
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (i != n / 2) scene.splits.targets.push_back(i);
    }
    if (scene.splits.targets.empty()) scene.splits.targets = scene.splits.heldout;
  }
  for (const auto* list : {&scene.splits.context, &scene.splits.targets, &scene.splits.heldout}) {
    for (std::size_t i : *list) {
      if (i >= n) throw ValidationError("split refers to view " + std::to_string(i) + " of " + std::to_string(n));
    }
  }
  if (scene.splits.context.size() < 2) throw ValidationError("scene needs at least two context views");
  const Camera ref_cam = spec_camera(spec, spec.reference ? *spec.reference : default_reference_pose(spec));
  scene.reference = SceneReference{ref_cam, render_scene_view(spec, ref_cam, seed).color};
  return scene;
}

}  // namespace splatforge
