#pragma once

#include <optional>

#include <Eigen/Core>

#include "splatforge/gaussians/gaussians.hpp"
#include "splatforge/geometry/camera.hpp"

namespace splatforge {

/// Added to every projected covariance, in px^2.
constexpr double kSigmaFloor = 0.3;
/// Primitives closer than this (camera z) are culled.
constexpr double kNearPlane = 0.01;
constexpr double kMaxAlpha = 0.999;
constexpr double kMinTransmittance = 1e-4;
constexpr int kTileSize = 16;

struct SplatFragment {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;  // includes the floor
  double depth = 0.0;
  double opacity = 0.0;
  Eigen::Vector3d color;
  int radius = 0;  // ceil(3 sigma_max) in pixels
};

/// Screen-space footprint of a primitive, or nullopt when it is behind the
/// near plane or its 3-sigma box misses the frame. The rotation is normalised
/// first.
std::optional<SplatFragment> project_gaussian(const GaussianPrimitive& g, const Camera& cam);

struct RenderOutput {
  Tensor image;  // [H, W, 3]
  Tensor alpha;  // [H, W], accumulated opacity
};

/// Tile-based front-to-back compositing over a black background.
/// Differentiable with respect to means, rotations, scales, opacities and
/// colours of the set; both outputs carry gradients.
RenderOutput rasterize(const GaussianSet& set, const Camera& cam);

}  // namespace splatforge
