#include "splatforge/assets/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "splatforge/errors.hpp"

namespace splatforge {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  // libpng requires this handler not to return; longjmp back into the caller.
  std::strncpy(static_cast<char*>(png_get_error_ptr(png)), message, 255);
  png_longjmp(png, 1);
}

void write_png_rows(const std::filesystem::path& path, std::size_t height, std::size_t width, int color_type,
                    int bit_depth, std::vector<png_bytep>& rows) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  char message[256] = {};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, message, png_fail, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  std::size_t height = 0, width = 0, channels = 0;
  int bit_depth = 8;
  std::vector<std::uint8_t> bytes;
};

Decoded decode_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot read " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path.string() + " is not a PNG file");
  }
  char message[256] = {};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, message, png_fail, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Decoded out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * out.height);
  std::vector<png_bytep> rows(out.height);
  for (std::size_t y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("write_png: need 1 or 3 channels");
  if (image.empty()) throw ValidationError("write_png: empty image");
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  }
  std::vector<png_bytep> rows(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = bytes.data() + y * image.width * image.channels;
  write_png_rows(path, image.height, image.width, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8,
                 rows);
}

Image read_png(const std::filesystem::path& path) {
  const Decoded d = decode_png(path);
  const bool gray = d.channels <= 2;
  const std::size_t keep = gray ? 1 : 3;
  Image out(d.height, d.width, keep);
  const double scale = d.bit_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t p = 0; p < d.height * d.width; ++p) {
    for (std::size_t c = 0; c < keep; ++c) {
      const std::size_t src = p * d.channels + c;
      double v;
      if (d.bit_depth == 16) {
        std::uint16_t raw;
        std::memcpy(&raw, d.bytes.data() + src * 2, 2);
        v = raw;
      } else {
        v = d.bytes[src];
      }
      out.data[p * keep + c] = v / scale;
    }
  }
  return out;
}

void write_png16(std::span<const std::uint16_t> values, std::size_t height, std::size_t width,
                 const std::filesystem::path& path) {
  if (values.size() != height * width || values.empty()) throw ValidationError("write_png16: size mismatch");
  std::vector<std::uint16_t> copy(values.begin(), values.end());
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = reinterpret_cast<png_bytep>(copy.data() + y * width);
  write_png_rows(path, height, width, PNG_COLOR_TYPE_GRAY, 16, rows);
}

std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, std::size_t& height, std::size_t& width) {
  const Decoded d = decode_png(path);
  if (d.bit_depth != 16 || d.channels != 1) throw IoError(path.string() + " is not a 16-bit grayscale PNG");
  height = d.height;
  width = d.width;
  std::vector<std::uint16_t> out(d.height * d.width);
  std::memcpy(out.data(), d.bytes.data(), out.size() * 2);
  return out;
}

void write_pfm(const Image& depth, const std::filesystem::path& path) {
  if (depth.channels != 1) throw ValidationError("write_pfm: need a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
  for (std::size_t y = depth.height; y-- > 0;) {
    for (std::size_t x = 0; x < depth.width; ++x) {
      const float v = static_cast<float>(depth.data[y * depth.width + x]);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  std::size_t width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  in.get();
  if (!in || magic != "Pf" || width == 0 || height == 0) throw IoError(path.string() + " is not a grayscale PFM");
  if (scale > 0) throw IoError(path.string() + ": big-endian PFM is not supported");
  Image out(height, width, 1);
  for (std::size_t y = height; y-- > 0;) {
    for (std::size_t x = 0; x < width; ++x) {
      float v;
      if (!in.read(reinterpret_cast<char*>(&v), 4)) throw IoError(path.string() + " is truncated");
      out.data[y * width + x] = v;
    }
  }
  return out;
}

Image quantize8(const Image& image) {
  Image out = image;
  for (double& v : out.data) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

Image box_downsample(const Image& image, std::size_t factor) {
  if (factor == 0 || image.height % factor != 0 || image.width % factor != 0) {
    throw ValidationError("box_downsample: " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                          " is not divisible by " + std::to_string(factor));
  }
  const std::size_t h = image.height / factor, w = image.width / factor;
  Image out(h, w, image.channels);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) acc += image.at(y * factor + dy, x * factor + dx, c);
        }
        out.at(y, x, c) = acc * inv;
      }
    }
  }
  return out;
}

}  // namespace splatforge
