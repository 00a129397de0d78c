#include "splatforge/geometry/camera.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Geometry>

#include "splatforge/errors.hpp"

namespace splatforge {

Camera::Camera(double fx, double fy, double cx, double cy, int width, int height,
               const Eigen::Matrix4d& world_to_camera)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height), world_to_camera_(world_to_camera) {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
  if (width < 8 || height < 8) throw ValidationError("camera must be at least 8x8 pixels");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !world_to_camera.allFinite()) {
    throw ValidationError("camera parameters must be finite");
  }
  const Eigen::Matrix3d r = rotation();
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::fabs(r.determinant() - 1.0) > 1e-9) {
    throw ValidationError("camera rotation is not orthonormal with det +1");
  }
  const Eigen::RowVector4d bottom = world_to_camera.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
    throw ValidationError("world_to_camera bottom row must be [0 0 0 1]");
  }
}

Camera Camera::look_at(double fx, double fy, double cx, double cy, int width, int height,
                       const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = target - position;
  if (forward.norm() < 1e-12) throw ValidationError("look_at: target coincides with position");
  const Eigen::Vector3d z = forward.normalized();
  Eigen::Vector3d down(0, 1, 0);
  if (std::fabs(z.dot(down)) > 1.0 - 1e-9) down = Eigen::Vector3d(0, 0, 1);
  const Eigen::Vector3d x = down.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = -r * position;
  return Camera(fx, fy, cx, cy, width, height, m);
}

Eigen::Vector3d Camera::center() const { return -rotation().transpose() * translation(); }

Eigen::Matrix<double, 3, 4> Camera::projection_matrix() const {
  Eigen::Matrix3d k;
  k << fx_, 0, cx_, 0, fy_, cy_, 0, 0, 1;
  return k * world_to_camera_.topRows<3>();
}

Camera Camera::downscaled(int factor) const {
  if (factor < 1 || width_ % factor != 0 || height_ % factor != 0) {
    throw ValidationError("camera of " + std::to_string(width_) + "x" + std::to_string(height_) +
                          " cannot be downscaled by " + std::to_string(factor));
  }
  const double f = factor;
  return Camera(fx_ / f, fy_ / f, (cx_ + 0.5) / f - 0.5, (cy_ + 0.5) / f - 0.5, width_ / factor,
                height_ / factor, world_to_camera_);
}

std::optional<PixelDepth> try_project(const Camera& cam, const Eigen::Vector3d& world) {
  const Eigen::Vector3d p = cam.rotation() * world + cam.translation();
  if (!(p.z() > 1e-9)) return std::nullopt;
  return PixelDepth{cam.cx() + cam.fx() * p.x() / p.z(), cam.cy() + cam.fy() * p.y() / p.z(), p.z()};
}

PixelDepth project(const Camera& cam, const Eigen::Vector3d& world) {
  auto p = try_project(cam, world);
  if (!p) throw ValidationError("project: point is at or behind the camera");
  return *p;
}

Eigen::Vector3d unproject(const Camera& cam, double u, double v, double depth) {
  if (!(depth > 0.0)) throw ValidationError("unproject: depth must be positive");
  const Eigen::Vector3d p((u - cam.cx()) / cam.fx() * depth, (v - cam.cy()) / cam.fy() * depth, depth);
  return cam.rotation().transpose() * (p - cam.translation());
}

WarpedFeature warp_feature(const Tensor& feature_j, const Camera& cam_i, const Camera& cam_j,
                           std::span<const double> depth_candidates) {
  if (depth_candidates.empty()) throw ValidationError("warp_feature: empty candidate list");
  if (feature_j.rank() != 3 || feature_j.dim(0) != static_cast<std::size_t>(cam_j.height()) ||
      feature_j.dim(1) != static_cast<std::size_t>(cam_j.width())) {
    throw ValidationError("warp_feature: feature map " + shape_string(feature_j.shape()) +
                          " does not match the source camera grid");
  }
  const std::size_t h = cam_i.height(), w = cam_i.width(), d = depth_candidates.size();
  const std::size_t c = feature_j.dim(2);
  // Pixel (x, y) at depth z maps into view j as a homography per depth plane:
  // X_j = R_j R_i^T (z K_i^-1 [x y 1] - t_i) + t_j.
  const Eigen::Matrix3d rel = cam_j.rotation() * cam_i.rotation().transpose();
  const Eigen::Vector3d offset = cam_j.translation() - rel * cam_i.translation();
  std::vector<ops::SamplePoint> points(h * w * d);
  std::vector<std::uint8_t> in_front(points.size(), 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Eigen::Vector3d ray((x - cam_i.cx()) / cam_i.fx(), (y - cam_i.cy()) / cam_i.fy(), 1.0);
      const Eigen::Vector3d dir = rel * ray;
      for (std::size_t k = 0; k < d; ++k) {
        const Eigen::Vector3d pj = dir * depth_candidates[k] + offset;
        const std::size_t idx = (y * w + x) * d + k;
        if (!(pj.z() > 1e-9)) {
          points[idx] = {-1e9, -1e9};
          in_front[idx] = 0;
          continue;
        }
        points[idx] = {cam_j.cx() + cam_j.fx() * pj.x() / pj.z(), cam_j.cy() + cam_j.fy() * pj.y() / pj.z()};
      }
    }
  }
  WarpedFeature out;
  Tensor samples = ops::sample_bilinear(feature_j, points, &out.valid);
  for (std::size_t i = 0; i < out.valid.size(); ++i) out.valid[i] &= in_front[i];
  out.values = ops::reshape(samples, {h, w, d, c});
  return out;
}

nlohmann::json camera_to_json(const Camera& cam) {
  std::vector<double> m(16);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m[r * 4 + c] = cam.world_to_camera()(r, c);
  }
  return {{"fx", cam.fx()},       {"fy", cam.fy()},         {"cx", cam.cx()},          {"cy", cam.cy()},
          {"width", cam.width()}, {"height", cam.height()}, {"world_to_camera", m}};
}

Camera camera_from_json(const nlohmann::json& doc) {
  try {
    auto m = doc.at("world_to_camera").get<std::vector<double>>();
    if (m.size() != 16) throw ValidationError("world_to_camera must have 16 numbers");
    Eigen::Matrix4d w2c;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) w2c(r, c) = m[r * 4 + c];
    }
    return Camera(doc.at("fx").get<double>(), doc.at("fy").get<double>(), doc.at("cx").get<double>(),
                  doc.at("cy").get<double>(), doc.at("width").get<int>(), doc.at("height").get<int>(), w2c);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid camera JSON: ") + e.what());
  }
}

void write_camera(const Camera& cam, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write camera " + path.string());
  out << camera_to_json(cam).dump(2) << '\n';
}

Camera read_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read camera " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt camera file " + path.string() + ": " + e.what());
  }
  try {
    return camera_from_json(doc);
  } catch (const ValidationError& e) {
    throw ValidationError("camera file " + path.string() + ": " + e.what());
  }
}

}  // namespace splatforge
