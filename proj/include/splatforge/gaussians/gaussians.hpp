#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "splatforge/errors.hpp"
#include "splatforge/geometry/camera.hpp"
#include "splatforge/numerics/params.hpp"
#include "splatforge/numerics/tensor.hpp"

namespace splatforge {

/// Plain-value primitive; rotation is (w, x, y, z).
struct GaussianPrimitive {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1, 0, 0, 0};
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  double opacity = 0.5;
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
};

enum class Provenance : std::uint8_t { kCoarse, kDense };

/// Pixel that spawned a primitive.
struct PixelRef {
  std::uint32_t view = 0;
  std::uint32_t y = 0;
  std::uint32_t x = 0;
};

/// Structure-of-arrays primitive set carried on the tape.
///
/// means [N,3], rotations [N,4] (unit rows), scales [N,3], opacities [N,1],
/// colors [N,3]. `features` [N,F] holds the decoder input of each primitive
/// and may be undefined for sets loaded from disk.
struct GaussianSet {
  Tensor means;
  Tensor rotations;
  Tensor scales;
  Tensor opacities;
  Tensor colors;
  Tensor features;
  std::vector<Provenance> provenance;
  std::vector<PixelRef> pixels;

  std::size_t size() const { return provenance.size(); }
  bool empty() const { return provenance.empty(); }
  std::size_t count(Provenance p) const;
};

/// Checks that every field has N rows of the right width.
void validate(const GaussianSet& set);

/// Rows of a followed by rows of b.
GaussianSet concat_sets(const GaussianSet& a, const GaussianSet& b);

std::vector<GaussianPrimitive> to_primitives(const GaussianSet& set);
/// Constant tensors, every primitive tagged coarse.
GaussianSet from_primitives(std::span<const GaussianPrimitive> prims);

/// Rotation matrix of a unit quaternion (w, x, y, z).
Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q);

/// R^T diag(s^2) R. Throws ValidationError if |q| differs from 1 by > 1e-6 or
/// any scale is non-positive.
Eigen::Matrix3d covariance(const Eigen::Vector3d& s, const Eigen::Vector4d& q);

constexpr double kScaleFloor = 1e-4;

struct HeadConfig {
  std::size_t input_channels = 35;
  std::size_t hidden = 32;
};

/// Two-layer heads "heads.{opacity,scale,rotation,color}.fc{1,2}.{weight,bias}".
void init_head_params(ParamStore& store, const HeadConfig& config, Rng& rng);

/// Pre-activation output of head `name` for inputs [N, F].
Tensor apply_head(const Tensor& input, const ParamStore& params, std::string_view name);

/// sigmoid / normalize(pre + (1,0,0,0)) / sigmoid.
Tensor opacity_activation(const Tensor& pre);
Tensor rotation_activation(const Tensor& pre);
Tensor color_activation(const Tensor& pre);
/// floor + softplus(pre) * footprint, footprint [N,1] being the world size of
/// one pixel at the primitive's depth.
Tensor scale_activation(const Tensor& pre, const Tensor& footprint);

/// One view's inputs to decode: the upsampled per-pixel feature [H,W,F]
/// and the depth map [H,W] on the camera's grid.
struct DecodeInput {
  Tensor feature;
  Tensor depth;
  const Camera* camera = nullptr;
};

/// One coarse primitive per pixel of every view, centred at
/// unproject(cam, x, y, depth(x, y)).
GaussianSet decode(std::span<const DecodeInput> views, const ParamStore& params);

/// Which check failed while reading a .splat file.
enum class SplatErrorKind { kBadMagic, kTruncated, kVersionMismatch };

class SplatFormatError : public IoError {
 public:
  SplatFormatError(SplatErrorKind kind, const std::string& message) : IoError(message), kind_(kind) {}
  SplatErrorKind kind() const { return kind_; }

 private:
  SplatErrorKind kind_;
};

constexpr std::uint32_t kSplatVersion = 1;

/// "SRSP", u32 version, u64 count, then 14 little-endian f32 per primitive:
/// mean, rotation (w,x,y,z), scale, opacity, color.
std::vector<std::uint8_t> encode_splat(std::span<const GaussianPrimitive> prims);
std::vector<GaussianPrimitive> decode_splat(std::span<const std::uint8_t> bytes);

void write_splat(const GaussianSet& set, const std::filesystem::path& path);
GaussianSet read_splat(const std::filesystem::path& path);

}  // namespace splatforge
