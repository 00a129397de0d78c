#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "splatforge/numerics/ops.hpp"

namespace splatforge {

/// Pinhole camera. Pixel (x, y) is centred on the continuous coordinate
/// (x, y); camera axes are x right, y down, z forward.
class Camera {
 public:
  /// Validates fx, fy > 0, width, height >= 8 and an orthonormal, right-handed
  /// rotation block (R^T R = I within 1e-9, det = +1).
  Camera(double fx, double fy, double cx, double cy, int width, int height,
         const Eigen::Matrix4d& world_to_camera);

  /// Camera at `position` looking at `target`; world +y is "down" on screen.
  static Camera look_at(double fx, double fy, double cx, double cy, int width, int height,
                        const Eigen::Vector3d& position, const Eigen::Vector3d& target);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const Eigen::Matrix4d& world_to_camera() const { return world_to_camera_; }
  Eigen::Matrix3d rotation() const { return world_to_camera_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_to_camera_.topRightCorner<3, 1>(); }
  Eigen::Vector3d center() const;
  /// 3x4 intrinsics-times-extrinsics matrix.
  Eigen::Matrix<double, 3, 4> projection_matrix() const;

  /// Same camera on a grid downsampled by `factor` (width/factor pixels),
  /// keeping pixel footprints aligned: u' = (u + 0.5) / factor - 0.5.
  Camera downscaled(int factor) const;

 private:
  double fx_, fy_, cx_, cy_;
  int width_, height_;
  Eigen::Matrix4d world_to_camera_;
};

struct PixelDepth {
  double u;
  double v;
  double depth;
};

/// Throws ValidationError if the point is at or behind the camera (z <= 1e-9).
PixelDepth project(const Camera& cam, const Eigen::Vector3d& world);
std::optional<PixelDepth> try_project(const Camera& cam, const Eigen::Vector3d& world);

/// Throws ValidationError for non-positive depth.
Eigen::Vector3d unproject(const Camera& cam, double u, double v, double depth);

/// Samples F_j (at the grid of cam_j) for every pixel of cam_i and every
/// candidate depth. Output [h, w, D, C] in view i's grid; `valid` gets
/// [h, w, D] flags (0 when the reprojection leaves the frame or lands behind
/// cam_j). Differentiable with respect to the feature map.
struct WarpedFeature {
  Tensor values;
  std::vector<std::uint8_t> valid;
};

WarpedFeature warp_feature(const Tensor& feature_j, const Camera& cam_i, const Camera& cam_j,
                           std::span<const double> depth_candidates);

nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& doc);
void write_camera(const Camera& cam, const std::filesystem::path& path);
/// Errors name the offending file.
Camera read_camera(const std::filesystem::path& path);

}  // namespace splatforge
