#include <algorithm>
#include <cmath>

#include "splatforge/errors.hpp"
#include "splatforge/features/features.hpp"
#include "splatforge/numerics/ops.hpp"
#include "splatforge/numerics/parallel.hpp"

namespace splatforge {

namespace {

struct UnitField {
  std::size_t height, width, channels;
  std::vector<double> data;  // L2-normalised rows; all-zero rows stay zero

  const double* at(std::size_t y, std::size_t x) const { return data.data() + (y * width + x) * channels; }
};

UnitField normalise(const Tensor& map) {
  UnitField f{map.dim(0), map.dim(1), map.dim(2), {map.values().begin(), map.values().end()}};
  for (std::size_t p = 0; p < f.height * f.width; ++p) {
    double* row = f.data.data() + p * f.channels;
    double ss = 0.0;
    for (std::size_t c = 0; c < f.channels; ++c) ss += row[c] * row[c];
    if (ss > 0.0) {
      const double inv = 1.0 / std::sqrt(ss);
      for (std::size_t c = 0; c < f.channels; ++c) row[c] *= inv;
    }
  }
  return f;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

struct Best {
  long u = 0, v = 0;
  double score = -2.0;
};

// Scans ref rows [v0, v1] x cols [u0, u1] in row-major order; strict '>' keeps
// the smallest index among ties.
Best search(const double* query, const UnitField& ref, long u0, long u1, long v0, long v1) {
  Best best;
  for (long v = v0; v <= v1; ++v) {
    for (long u = u0; u <= u1; ++u) {
      const double s = dot(query, ref.at(v, u), ref.channels);
      if (s > best.score) best = {u, v, s};
    }
  }
  return best;
}

MatchLevel allocate(std::size_t h, std::size_t w) {
  MatchLevel level;
  level.height = h;
  level.width = w;
  level.u.resize(h * w);
  level.v.resize(h * w);
  level.score.resize(h * w);
  level.seed_score.resize(h * w);
  return level;
}

// Window search around per-pixel candidates produced by `seed(x, y)`.
template <class Seed>
void refine(MatchLevel& level, const UnitField& src, const UnitField& ref, int radius, Seed seed) {
  const long rw = static_cast<long>(ref.width), rh = static_cast<long>(ref.height);
  parallel_for(src.height, [&](std::size_t y) {
    for (std::size_t x = 0; x < src.width; ++x) {
      auto [cu, cv] = seed(static_cast<long>(x), static_cast<long>(y));
      cu = std::clamp(cu, 0L, rw - 1);
      cv = std::clamp(cv, 0L, rh - 1);
      const double* q = src.at(y, x);
      Best best = search(q, ref, std::max(0L, cu - radius), std::min(rw - 1, cu + radius),
                         std::max(0L, cv - radius), std::min(rh - 1, cv + radius));
      const std::size_t i = y * src.width + x;
      level.u[i] = static_cast<std::uint32_t>(best.u);
      level.v[i] = static_cast<std::uint32_t>(best.v);
      level.score[i] = best.score;
      level.seed_score[i] = dot(q, ref.at(cv, cu), ref.channels);
    }
  });
}

}  // namespace

MatchMap match(const FeaturePyramid& input, const FeaturePyramid& reference, int stride, int radius) {
  if (stride < 1 || radius < 0) throw ValidationError("match: stride must be >= 1 and radius >= 0");
  for (std::size_t l = 0; l < 3; ++l) {
    if (input.levels[l].rank() != 3 || reference.levels[l].rank() != 3) {
      throw ValidationError("match: pyramid levels must be [H,W,C]");
    }
    if (input.levels[l].dim(2) != reference.levels[l].dim(2)) {
      throw ValidationError("match: channel mismatch between pyramids at level " + std::to_string(l + 1));
    }
  }
  MatchMap out;

  // Coarsest level: exhaustive search for the stride-grid anchors.
  const UnitField src = normalise(input.levels[2]);
  const UnitField ref = normalise(reference.levels[2]);
  const std::size_t gh = (src.height + stride - 1) / stride, gw = (src.width + stride - 1) / stride;
  std::vector<Best> anchors(gh * gw);
  parallel_for(gh, [&](std::size_t gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      anchors[gy * gw + gx] = search(src.at(gy * stride, gx * stride), ref, 0, static_cast<long>(ref.width) - 1, 0,
                                     static_cast<long>(ref.height) - 1);
    }
  });
  out.levels[2] = allocate(src.height, src.width);
  refine(out.levels[2], src, ref, radius, [&](long x, long y) {
    const long ax = x / stride * stride, ay = y / stride * stride;
    const Best& a = anchors[(ay / stride) * gw + ax / stride];
    return std::pair{x + (a.u - ax), y + (a.v - ay)};
  });

  // Finer levels: doubled offsets of the parent pixel, then window search.
  for (int l = 1; l >= 0; --l) {
    const UnitField s = normalise(input.levels[l]);
    const UnitField r = normalise(reference.levels[l]);
    const MatchLevel& parent = out.levels[l + 1];
    out.levels[l] = allocate(s.height, s.width);
    refine(out.levels[l], s, r, radius, [&](long x, long y) {
      const long px = std::min<long>(x / 2, static_cast<long>(parent.width) - 1);
      const long py = std::min<long>(y / 2, static_cast<long>(parent.height) - 1);
      const std::size_t i = py * parent.width + px;
      return std::pair{x + 2 * (static_cast<long>(parent.u[i]) - px), y + 2 * (static_cast<long>(parent.v[i]) - py)};
    });
  }
  return out;
}

FeaturePyramid warp_by_match(const FeaturePyramid& reference, const MatchMap& matches) {
  FeaturePyramid out;
  out.role = PyramidRole::kWarpedReference;
  for (std::size_t l = 0; l < 3; ++l) {
    const Tensor& ref = reference.levels[l];
    const MatchLevel& m = matches.levels[l];
    const std::size_t rh = ref.dim(0), rw = ref.dim(1), c = ref.dim(2);
    const std::size_t n = m.height * m.width;
    std::vector<std::size_t> rows(n);
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (m.u[i] >= rw || m.v[i] >= rh) throw ValidationError("warp_by_match: match outside the reference");
      rows[i] = static_cast<std::size_t>(m.v[i]) * rw + m.u[i];
      weights[i] = std::max(m.score[i], 0.0);
    }
    Tensor gathered = ops::gather_rows(ops::reshape(ref, {rh * rw, c}), rows);
    Tensor scaled = ops::mul_bcast_last(gathered, Tensor::constant({n, 1}, std::move(weights)));
    out.levels[l] = ops::reshape(scaled, {m.height, m.width, c});
  }
  return out;
}

}  // namespace splatforge
