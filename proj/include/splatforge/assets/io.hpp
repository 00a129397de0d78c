#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "splatforge/geometry/image.hpp"

namespace splatforge {

/// 8-bit PNG with 1 or 3 channels; values are clamped to [0, 1] and rounded.
void write_png(const Image& image, const std::filesystem::path& path);
/// Any 8/16-bit gray, gray+alpha, RGB or RGBA PNG, returned as 3 channels
/// (alpha dropped) or 1 channel for gray input, scaled to [0, 1].
Image read_png(const std::filesystem::path& path);

/// 16-bit grayscale PNG.
void write_png16(std::span<const std::uint16_t> values, std::size_t height, std::size_t width,
                 const std::filesystem::path& path);
std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, std::size_t& height, std::size_t& width);

/// Single-channel little-endian PFM ("Pf"), rows stored bottom-up per format.
void write_pfm(const Image& depth, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

/// Rounds every value to the nearest multiple of 1/255 after clamping.
Image quantize8(const Image& image);

/// Mean over non-overlapping factor x factor blocks.
Image box_downsample(const Image& image, std::size_t factor);

}  // namespace splatforge
