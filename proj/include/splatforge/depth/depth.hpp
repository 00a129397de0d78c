#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splatforge/geometry/camera.hpp"
#include "splatforge/numerics/params.hpp"
#include "splatforge/numerics/tensor.hpp"

namespace splatforge {

/// Strictly increasing, positive depth hypotheses.
class DepthCandidates {
 public:
  explicit DepthCandidates(std::vector<double> values);
  /// `count` values evenly spaced in 1/d between near and far.
  static DepthCandidates inverse_uniform(double near, double far, std::size_t count);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double front() const { return values_.front(); }
  double back() const { return values_.back(); }
  /// Distance to the nearest neighbouring candidate.
  double local_spacing(std::size_t k) const;

 private:
  std::vector<double> values_;
};

/// scores [h, w, D]; mask has one flag per entry, 0 where the warp left the
/// frame.
struct CostVolume {
  Tensor scores;
  std::vector<std::uint8_t> mask;
};

/// C[p, d] = <F_i[p], F_warped[p, d]> / sqrt(C).
CostVolume cost_volume(const Tensor& feature, const WarpedFeature& warped);

/// Per-entry mean over the volumes whose entry is valid; an entry stays
/// masked only when every volume masks it.
CostVolume average_volumes(std::span<const CostVolume> volumes);

/// What to do at a pixel whose every candidate is masked.
enum class MaskedPixelPolicy {
  kError,    // throw ValidationError
  kUniform,  // fall back to equal weights
};

/// Softmax over candidates (masked entries excluded) and expectation against
/// the candidate depths: [h, w]. `weights`, when given, receives [h, w, D].
Tensor softmax_depth(const CostVolume& volume, const DepthCandidates& candidates,
                     MaskedPixelPolicy policy = MaskedPixelPolicy::kError, Tensor* weights = nullptr);

/// "depth.refine.weight" [3,3,1,1] and "depth.refine.bias" [1], both zero.
void init_depth_params(ParamStore& store);

/// softmax_depth, bilinear upsampling by `factor`, a residual 3x3 refinement
/// convolution and a clamp to [d_1, d_D]. Output [h * factor, w * factor].
Tensor regress_depth(const CostVolume& volume, const DepthCandidates& candidates, const ParamStore& params,
                     std::size_t factor = 4, MaskedPixelPolicy policy = MaskedPixelPolicy::kError);

/// Depth map quantised to 16 bits over [d_1, d_D], row-major.
std::vector<std::uint16_t> depth_to_u16(const Tensor& depth, const DepthCandidates& candidates);

}  // namespace splatforge
