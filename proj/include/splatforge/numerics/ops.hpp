#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "splatforge/numerics/tensor.hpp"

/// Differentiable tensor ops. Shapes use HWC layout for images and feature
/// maps. Every op records a backward closure when any input is tracked.
namespace splatforge::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor scale(const Tensor& x, double c);

/// x[..., C] + bias[C]
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[..., C] * s[..., 1]
Tensor mul_bcast_last(const Tensor& x, const Tensor& s);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
/// Undefined gradient at zero; throws through the NaN check if hit.
Tensor sqrt(const Tensor& x);
/// Gradient is zero where the input was clamped.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// [..., C] -> [..., 1]
Tensor mean_last(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows along axis 0; repeated indices accumulate in backward.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// [N,K] x [K,M]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., Ci] * w[Ci, Co] + b[Co]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// [B,N,K] x [B,K,M]
Tensor bmm(const Tensor& a, const Tensor& b);
/// [B,N,M] -> [B,M,N]
Tensor transpose_last2(const Tensor& x);

/// Softmax over the last axis. mask (same numel, optional) marks entries that
/// take part; excluded entries get weight 0. Rows with nothing unmasked throw.
Tensor softmax_last(const Tensor& x, std::span<const std::uint8_t> mask = {});

/// x[H,W,Ci], w[k,k,Ci,Co], b[Co] (may be undefined); zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
/// Edge-replicating pad of an [H,W,C] map.
Tensor pad_replicate(const Tensor& x, int pad);
/// Half-pixel bilinear resize of an [H,W,C] map, edges clamped.
Tensor resize_bilinear(const Tensor& x, std::size_t height, std::size_t width);

struct SamplePoint {
  double x;  // column
  double y;  // row
};

/// Bilinear samples of an [H,W,C] map at constant points -> [N,C].
///
/// A point is valid when it lies inside the pixel footprint
/// [-0.5, W-0.5] x [-0.5, H-0.5]; invalid points sample zero. Taps that fall
/// off the grid contribute zero. Integer points return stored values exactly.
Tensor sample_bilinear(const Tensor& x, std::span<const SamplePoint> points,
                       std::vector<std::uint8_t>* valid = nullptr);

/// Rows of x[..., C] scaled to unit length (with a 1e-12 guard under the root).
Tensor normalize_rows(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

inline Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }
inline Tensor l1(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

}  // namespace splatforge::ops
