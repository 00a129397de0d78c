#include "splatforge/gaussians/gaussians.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "splatforge/numerics/ops.hpp"

namespace splatforge {

std::size_t GaussianSet::count(Provenance p) const {
  return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), p));
}

void validate(const GaussianSet& set) {
  const std::size_t n = set.size();
  // A default-constructed set is a valid empty set.
  if (n == 0 && !set.means.defined() && !set.rotations.defined() && !set.scales.defined() &&
      !set.opacities.defined() && !set.colors.defined()) {
    return;
  }
  auto check = [n](const Tensor& t, std::size_t width, const char* name) {
    if (!t.defined() || t.rank() != 2 || t.dim(0) != n || t.dim(1) != width) {
      throw ValidationError(std::string("gaussian set: field ") + name + " must be [" + std::to_string(n) + "," +
                            std::to_string(width) + "]");
    }
  };
  check(set.means, 3, "means");
  check(set.rotations, 4, "rotations");
  check(set.scales, 3, "scales");
  check(set.opacities, 1, "opacities");
  check(set.colors, 3, "colors");
  if (set.features.defined() && (set.features.rank() != 2 || set.features.dim(0) != n)) {
    throw ValidationError("gaussian set: features must have one row per primitive");
  }
  if (!set.pixels.empty() && set.pixels.size() != n) throw ValidationError("gaussian set: pixel refs size mismatch");
}

GaussianSet concat_sets(const GaussianSet& a, const GaussianSet& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  auto cat = [](const Tensor& x, const Tensor& y) {
    const Tensor parts[] = {x, y};
    return ops::concat(parts, 0);
  };
  GaussianSet out;
  out.means = cat(a.means, b.means);
  out.rotations = cat(a.rotations, b.rotations);
  out.scales = cat(a.scales, b.scales);
  out.opacities = cat(a.opacities, b.opacities);
  out.colors = cat(a.colors, b.colors);
  if (a.features.defined() && b.features.defined()) out.features = cat(a.features, b.features);
  out.provenance = a.provenance;
  out.provenance.insert(out.provenance.end(), b.provenance.begin(), b.provenance.end());
  if (!a.pixels.empty() && !b.pixels.empty()) {
    out.pixels = a.pixels;
    out.pixels.insert(out.pixels.end(), b.pixels.begin(), b.pixels.end());
  }
  return out;
}

std::vector<GaussianPrimitive> to_primitives(const GaussianSet& set) {
  validate(set);
  std::vector<GaussianPrimitive> out(set.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& p = out[i];
    for (int k = 0; k < 3; ++k) {
      p.mean[k] = set.means[i * 3 + k];
      p.scale[k] = set.scales[i * 3 + k];
      p.color[k] = set.colors[i * 3 + k];
    }
    for (int k = 0; k < 4; ++k) p.rotation[k] = set.rotations[i * 4 + k];
    p.opacity = set.opacities[i];
  }
  return out;
}

GaussianSet from_primitives(std::span<const GaussianPrimitive> prims) {
  const std::size_t n = prims.size();
  std::vector<double> m(n * 3), q(n * 4), s(n * 3), a(n), c(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      m[i * 3 + k] = prims[i].mean[k];
      s[i * 3 + k] = prims[i].scale[k];
      c[i * 3 + k] = prims[i].color[k];
    }
    for (int k = 0; k < 4; ++k) q[i * 4 + k] = prims[i].rotation[k];
    a[i] = prims[i].opacity;
  }
  GaussianSet set;
  set.means = Tensor::constant({n, 3}, std::move(m));
  set.rotations = Tensor::constant({n, 4}, std::move(q));
  set.scales = Tensor::constant({n, 3}, std::move(s));
  set.opacities = Tensor::constant({n, 1}, std::move(a));
  set.colors = Tensor::constant({n, 3}, std::move(c));
  set.provenance.assign(n, Provenance::kCoarse);
  return set;
}

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d covariance(const Eigen::Vector3d& s, const Eigen::Vector4d& q) {
  if (std::fabs(q.norm() - 1.0) > 1e-6) throw ValidationError("covariance: quaternion is not unit length");
  if (!(s.minCoeff() > 0.0)) throw ValidationError("covariance: scales must be positive");
  const Eigen::Matrix3d r = rotation_from_quaternion(q);
  Eigen::Matrix3d sigma = r.transpose() * s.array().square().matrix().asDiagonal() * r;
  // Symmetric by construction up to rounding; make it exact.
  return 0.5 * (sigma + sigma.transpose());
}

namespace {

constexpr const char* kHeads[] = {"opacity", "scale", "rotation", "color"};
constexpr std::size_t kHeadWidth[] = {1, 3, 4, 3};

std::string head_param(std::string_view head, const char* layer, const char* part) {
  return "heads." + std::string(head) + "." + layer + "." + part;
}

}  // namespace

void init_head_params(ParamStore& store, const HeadConfig& config, Rng& rng) {
  const std::size_t in = config.input_channels, hid = config.hidden;
  for (std::size_t h = 0; h < 4; ++h) {
    const std::size_t out = kHeadWidth[h];
    store.add(head_param(kHeads[h], "fc1", "weight"), {in, hid}, glorot_uniform(rng, in * hid, in, hid));
    store.add(head_param(kHeads[h], "fc1", "bias"), {hid}, std::vector<double>(hid, 0.0));
    store.add(head_param(kHeads[h], "fc2", "weight"), {hid, out}, glorot_uniform(rng, hid * out, hid, out, 0.1));
    store.add(head_param(kHeads[h], "fc2", "bias"), {out}, std::vector<double>(out, 0.0));
  }
}

Tensor apply_head(const Tensor& input, const ParamStore& params, std::string_view name) {
  Tensor hidden = ops::tanh(ops::linear(input, params.get(head_param(name, "fc1", "weight")),
                                        params.get(head_param(name, "fc1", "bias"))));
  return ops::linear(hidden, params.get(head_param(name, "fc2", "weight")), params.get(head_param(name, "fc2", "bias")));
}

Tensor opacity_activation(const Tensor& pre) { return ops::sigmoid(pre); }

Tensor rotation_activation(const Tensor& pre) {
  return ops::normalize_rows(ops::add_bias(pre, Tensor::constant({4}, {1.0, 0.0, 0.0, 0.0})));
}

Tensor color_activation(const Tensor& pre) { return ops::sigmoid(pre); }

Tensor scale_activation(const Tensor& pre, const Tensor& footprint) {
  return ops::add_scalar(ops::mul_bcast_last(ops::softplus(pre), footprint), kScaleFloor);
}

GaussianSet decode(std::span<const DecodeInput> views, const ParamStore& params) {
  if (views.empty()) throw ValidationError("decode: no views");
  std::vector<Tensor> feats, means, footprints;
  GaussianSet set;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const DecodeInput& in = views[v];
    if (!in.camera) throw ValidationError("decode: view " + std::to_string(v) + " has no camera");
    const Camera& cam = *in.camera;
    const std::size_t h = cam.height(), w = cam.width();
    if (in.depth.rank() != 2 || in.depth.dim(0) != h || in.depth.dim(1) != w) {
      throw ValidationError("decode: depth map " + shape_string(in.depth.shape()) + " of view " + std::to_string(v) +
                            " does not match its " + std::to_string(w) + "x" + std::to_string(h) + " camera");
    }
    if (in.feature.rank() != 3 || in.feature.dim(0) != h || in.feature.dim(1) != w) {
      throw ValidationError("decode: feature map of view " + std::to_string(v) + " does not match its camera");
    }
    // mu = center + d * R^T K^-1 [x y 1]
    const Eigen::Matrix3d rt = cam.rotation().transpose();
    const Eigen::Vector3d center = cam.center();
    std::vector<double> dirs(h * w * 3), centers(h * w * 3);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Eigen::Vector3d d = rt * Eigen::Vector3d((x - cam.cx()) / cam.fx(), (y - cam.cy()) / cam.fy(), 1.0);
        for (int k = 0; k < 3; ++k) {
          dirs[(y * w + x) * 3 + k] = d[k];
          centers[(y * w + x) * 3 + k] = center[k];
        }
        set.pixels.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x)});
      }
    }
    Tensor depth = ops::reshape(in.depth, {h * w, 1});
    means.push_back(ops::add(ops::mul_bcast_last(Tensor::constant({h * w, 3}, std::move(dirs)), depth),
                             Tensor::constant({h * w, 3}, std::move(centers))));
    footprints.push_back(ops::scale(depth, 1.0 / cam.fx()));
    feats.push_back(ops::reshape(in.feature, {h * w, in.feature.dim(2)}));
  }
  auto cat = [](const std::vector<Tensor>& parts) { return parts.size() == 1 ? parts[0] : ops::concat(parts, 0); };
  set.features = cat(feats);
  set.means = cat(means);
  const Tensor footprint = cat(footprints);
  set.opacities = opacity_activation(apply_head(set.features, params, "opacity"));
  set.scales = scale_activation(apply_head(set.features, params, "scale"), footprint);
  set.rotations = rotation_activation(apply_head(set.features, params, "rotation"));
  set.colors = color_activation(apply_head(set.features, params, "color"));
  set.provenance.assign(set.pixels.size(), Provenance::kCoarse);
  return set;
}

namespace {

constexpr char kMagic[4] = {'S', 'R', 'S', 'P'};
constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kRecordFloats = 14;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get_le(const std::uint8_t* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_splat(std::span<const GaussianPrimitive> prims) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(kHeaderBytes + prims.size() * kRecordFloats * 4);
  put_le<std::uint32_t>(out, kSplatVersion);
  put_le<std::uint64_t>(out, prims.size());
  for (const GaussianPrimitive& p : prims) {
    for (int k = 0; k < 3; ++k) put_le<float>(out, static_cast<float>(p.mean[k]));
    for (int k = 0; k < 4; ++k) put_le<float>(out, static_cast<float>(p.rotation[k]));
    for (int k = 0; k < 3; ++k) put_le<float>(out, static_cast<float>(p.scale[k]));
    put_le<float>(out, static_cast<float>(p.opacity));
    for (int k = 0; k < 3; ++k) put_le<float>(out, static_cast<float>(p.color[k]));
  }
  return out;
}

std::vector<GaussianPrimitive> decode_splat(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw SplatFormatError(SplatErrorKind::kTruncated, "splat file shorter than its magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw SplatFormatError(SplatErrorKind::kBadMagic, "splat file has bad magic");
  if (bytes.size() < kHeaderBytes) throw SplatFormatError(SplatErrorKind::kTruncated, "splat header is truncated");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kSplatVersion) {
    throw SplatFormatError(SplatErrorKind::kVersionMismatch, "unsupported splat version " + std::to_string(version));
  }
  const auto count = get_le<std::uint64_t>(bytes.data() + 8);
  const std::size_t body = bytes.size() - kHeaderBytes;
  if (count > body / (kRecordFloats * 4) || body != count * kRecordFloats * 4) {
    throw SplatFormatError(SplatErrorKind::kTruncated, "splat body does not hold " + std::to_string(count) + " primitives");
  }
  std::vector<GaussianPrimitive> prims(count);
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  auto next = [&p] {
    const double v = get_le<float>(p);
    p += 4;
    return v;
  };
  for (auto& g : prims) {
    for (int k = 0; k < 3; ++k) g.mean[k] = next();
    for (int k = 0; k < 4; ++k) g.rotation[k] = next();
    for (int k = 0; k < 3; ++k) g.scale[k] = next();
    g.opacity = next();
    for (int k = 0; k < 3; ++k) g.color[k] = next();
  }
  return prims;
}

void write_splat(const GaussianSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_splat(to_primitives(set));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write splat file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing splat file " + path.string());
}

GaussianSet read_splat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read splat file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    auto prims = decode_splat(bytes);
    return from_primitives(prims);
  } catch (const SplatFormatError& e) {
    throw SplatFormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace splatforge
