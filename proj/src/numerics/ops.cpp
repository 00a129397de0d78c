#include "splatforge/numerics/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "splatforge/errors.hpp"

namespace splatforge::ops {

using detail::grad_sink;
using detail::make_result;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ValidationError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                          shape_string(x.shape()));
  }
}

std::size_t last_dim(const Tensor& x) { return x.rank() == 0 ? 1 : x.shape().back(); }

// Elementwise map with derivative df(x, y).
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  std::vector<double> y;
  if (x.requires_grad()) y = out;
  return make_result(op, x.shape(), std::move(out), {x}, [x, df, y](std::span<const double> g) {
    auto gx = grad_sink(x);
    auto xv = x.values();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], y[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!ga.empty()) ga[i] += g[i];
      if (!gb.empty()) gb[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!ga.empty()) ga[i] += g[i];
      if (!gb.empty()) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!ga.empty()) ga[i] += g[i] * bv[i];
      if (!gb.empty()) gb[i] += g[i] * av[i];
    }
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v += c;
  return make_result("add_scalar", x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= c;
  return make_result("scale", x.shape(), std::move(out), {x}, [x, c](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  std::size_t c = last_dim(x);
  if (bias.numel() != c) {
    throw ValidationError("add_bias: bias " + shape_string(bias.shape()) + " vs input " +
                          shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  return make_result("add_bias", x.shape(), std::move(out), {x, bias},
                     [x, bias, c](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       auto gb = grad_sink(bias);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (!gx.empty()) gx[i] += g[i];
                         if (!gb.empty()) gb[i % c] += g[i];
                       }
                     });
}

Tensor mul_bcast_last(const Tensor& x, const Tensor& s) {
  std::size_t c = last_dim(x);
  if (s.numel() * c != x.numel()) {
    throw ValidationError("mul_bcast_last: " + shape_string(x.shape()) + " vs " +
                          shape_string(s.shape()));
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s[i / c];
  return make_result("mul_bcast_last", x.shape(), std::move(out), {x, s},
                     [x, s, c](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       auto gs = grad_sink(s);
                       auto xv = x.values();
                       auto sv = s.values();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (!gx.empty()) gx[i] += g[i] * sv[i / c];
                         if (!gs.empty()) gs[i / c] += g[i] * xv[i];
                       }
                     });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x,
               [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
               [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
  return unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return 0.5 / y; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result("sum", {}, {total}, {x}, [x](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ValidationError("mean of empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  double n = static_cast<double>(x.numel());
  return make_result("mean", {}, {total / n}, {x}, [x, n](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (double& v : gx) v += g[0] / n;
  });
}

Tensor mean_last(const Tensor& x) {
  std::size_t c = last_dim(x);
  std::size_t rows = x.numel() / c;
  std::vector<double> out(rows, 0.0);
  for (std::size_t i = 0; i < x.numel(); ++i) out[i / c] += x[i];
  for (double& v : out) v /= static_cast<double>(c);
  Shape shape = x.shape();
  if (shape.empty()) shape.push_back(1);
  shape.back() = 1;
  return make_result("mean_last", shape, std::move(out), {x}, [x, c](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i / c] / static_cast<double>(c);
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ValidationError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [x](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ValidationError("concat of nothing");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ValidationError("concat axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) throw ValidationError("concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) {
        throw ValidationError("concat: shape mismatch " + shape_string(p.shape()) + " vs " +
                              shape_string(first));
      }
    }
    shape[axis] += p.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::size_t out_stride = shape[axis] * inner;
  std::vector<double> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    std::size_t chunk = p.shape()[axis] * inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * chunk, chunk, out.begin() + o * out_stride + offset);
    }
    offset += chunk;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result("concat", std::move(shape), std::move(out), inputs,
                     [inputs, offsets, outer, inner, axis, out_stride](std::span<const double> g) {
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         auto gp = grad_sink(inputs[k]);
                         if (gp.empty()) continue;
                         std::size_t chunk = inputs[k].shape()[axis] * inner;
                         for (std::size_t o = 0; o < outer; ++o) {
                           for (std::size_t i = 0; i < chunk; ++i) {
                             gp[o * chunk + i] += g[o * out_stride + offsets[k] + i];
                           }
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin > end || end > x.shape()[axis]) {
    throw ValidationError("slice out of range on shape " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  std::size_t in_stride = x.shape()[axis] * inner;
  std::size_t chunk = (end - begin) * inner;
  std::vector<double> out(outer * chunk);
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + o * in_stride + begin * inner, chunk, out.begin() + o * chunk);
  }
  return make_result("slice", std::move(shape), std::move(out), {x},
                     [x, outer, inner, in_stride, chunk, begin](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < chunk; ++i) {
                           gx[o * in_stride + begin * inner + i] += g[o * chunk + i];
                         }
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw ValidationError("gather_rows on a scalar");
  std::size_t n = x.shape()[0];
  std::size_t width = n == 0 ? 0 : x.numel() / n;
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * width);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw ValidationError("gather_rows: index out of range");
    std::copy_n(xv.begin() + rows[r] * width, width, out.begin() + r * width);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result("gather_rows", std::move(shape), std::move(out), {x},
                     [x, idx, width](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         for (std::size_t j = 0; j < width; ++j) gx[idx[r] * width + j] += g[r * width + j];
                       }
                     });
}

namespace {

// out[n,m] += a[n,k] b[k,m]
void gemm_acc(const double* a, const double* b, double* out, std::size_t n, std::size_t k,
              std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += av * brow[j];
    }
  }
}

// ga[n,k] += g[n,m] b[k,m]^T
void gemm_acc_bt(const double* g, const double* b, double* ga, std::size_t n, std::size_t k,
                 std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
      ga[i * k + p] += acc;
    }
  }
}

// gb[k,m] += a[n,k]^T g[n,m]
void gemm_acc_at(const double* a, const double* g, double* gb, std::size_t n, std::size_t k,
                 std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      double* brow = gb + p * m;
      for (std::size_t j = 0; j < m; ++j) brow[j] += av * grow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ValidationError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  gemm_acc(a.values().data(), b.values().data(), out.data(), n, k, m);
  return make_result("matmul", {n, m}, std::move(out), {a, b},
                     [a, b, n, k, m](std::span<const double> g) {
                       auto ga = grad_sink(a);
                       auto gb = grad_sink(b);
                       if (!ga.empty()) gemm_acc_bt(g.data(), b.values().data(), ga.data(), n, k, m);
                       if (!gb.empty()) gemm_acc_at(a.values().data(), g.data(), gb.data(), n, k, m);
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear weight", w, 2);
  std::size_t ci = w.dim(0), co = w.dim(1);
  if (last_dim(x) != ci) {
    throw ValidationError("linear: input " + shape_string(x.shape()) + " vs weight " +
                          shape_string(w.shape()));
  }
  if (b.defined() && b.numel() != co) throw ValidationError("linear: bias size mismatch");
  std::size_t n = x.numel() / ci;
  std::vector<double> out(n * co, 0.0);
  if (b.defined()) {
    for (std::size_t i = 0; i < n; ++i) std::copy_n(b.values().begin(), co, out.begin() + i * co);
  }
  gemm_acc(x.values().data(), w.values().data(), out.data(), n, ci, co);
  Shape shape = x.shape();
  shape.back() = co;
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result("linear", std::move(shape), std::move(out), inputs,
                     [x, w, b, n, ci, co](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       auto gw = grad_sink(w);
                       auto gb = grad_sink(b);
                       if (!gx.empty()) gemm_acc_bt(g.data(), w.values().data(), gx.data(), n, ci, co);
                       if (!gw.empty()) gemm_acc_at(x.values().data(), g.data(), gw.data(), n, ci, co);
                       if (!gb.empty()) {
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < co; ++j) gb[j] += g[i * co + j];
                         }
                       }
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  std::size_t batch = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ValidationError("bmm: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(batch * n * m, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_acc(a.values().data() + i * n * k, b.values().data() + i * k * m, out.data() + i * n * m, n,
             k, m);
  }
  return make_result("bmm", {batch, n, m}, std::move(out), {a, b},
                     [a, b, batch, n, k, m](std::span<const double> g) {
                       auto ga = grad_sink(a);
                       auto gb = grad_sink(b);
                       for (std::size_t i = 0; i < batch; ++i) {
                         const double* gi = g.data() + i * n * m;
                         if (!ga.empty()) {
                           gemm_acc_bt(gi, b.values().data() + i * k * m, ga.data() + i * n * k, n, k, m);
                         }
                         if (!gb.empty()) {
                           gemm_acc_at(a.values().data() + i * n * k, gi, gb.data() + i * k * m, n, k, m);
                         }
                       }
                     });
}

Tensor transpose_last2(const Tensor& x) {
  require_rank("transpose_last2", x, 3);
  std::size_t batch = x.dim(0), n = x.dim(1), m = x.dim(2);
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) out[b * n * m + j * n + i] = xv[b * n * m + i * m + j];
    }
  }
  return make_result("transpose_last2", {batch, m, n}, std::move(out), {x},
                     [x, batch, n, m](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < m; ++j) {
                             gx[b * n * m + i * m + j] += g[b * n * m + j * n + i];
                           }
                         }
                       }
                     });
}

Tensor softmax_last(const Tensor& x, std::span<const std::uint8_t> mask) {
  std::size_t d = last_dim(x);
  if (!mask.empty() && mask.size() != x.numel()) throw ValidationError("softmax_last: mask size mismatch");
  std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel(), 0.0);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j) {
      if (mask.empty() || mask[r * d + j]) peak = std::max(peak, xv[r * d + j]);
    }
    if (!std::isfinite(peak)) {
      throw ValidationError("softmax_last: every entry masked in row " + std::to_string(r));
    }
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (mask.empty() || mask[r * d + j]) {
        out[r * d + j] = std::exp(xv[r * d + j] - peak);
        total += out[r * d + j];
      }
    }
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= total;
  }
  std::vector<double> y = out;
  return make_result("softmax_last", x.shape(), std::move(out), {x},
                     [x, y, d, rows](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
                         for (std::size_t j = 0; j < d; ++j) {
                           gx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
                         }
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  require_rank("conv2d input", x, 3);
  require_rank("conv2d weight", w, 4);
  const std::size_t h = x.dim(0), wd = x.dim(1), ci = x.dim(2);
  const std::size_t k = w.dim(0), co = w.dim(3);
  if (w.dim(1) != k || w.dim(2) != ci) {
    throw ValidationError("conv2d: weight " + shape_string(w.shape()) + " vs input " +
                          shape_string(x.shape()));
  }
  if (b.defined() && b.numel() != co) throw ValidationError("conv2d: bias size mismatch");
  if (stride < 1 || pad < 0) throw ValidationError("conv2d: bad stride/pad");
  const long ph = static_cast<long>(h) + 2 * pad - static_cast<long>(k);
  const long pw = static_cast<long>(wd) + 2 * pad - static_cast<long>(k);
  if (ph < 0 || pw < 0) throw ValidationError("conv2d: input smaller than kernel");
  const std::size_t oh = static_cast<std::size_t>(ph / stride + 1);
  const std::size_t ow = static_cast<std::size_t>(pw / stride + 1);

  std::vector<double> out(oh * ow * co, 0.0);
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* orow = out.data() + (oy * ow + ox) * co;
      if (b.defined()) std::copy_n(b.values().begin(), co, orow);
      for (std::size_t ky = 0; ky < k; ++ky) {
        long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
          if (ix < 0 || ix >= static_cast<long>(wd)) continue;
          const double* xin = xv + (static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)) * ci;
          const double* wk = wv + (ky * k + kx) * ci * co;
          for (std::size_t c = 0; c < ci; ++c) {
            double v = xin[c];
            const double* wrow = wk + c * co;
            for (std::size_t o = 0; o < co; ++o) orow[o] += v * wrow[o];
          }
        }
      }
    }
  }
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(
      "conv2d", {oh, ow, co}, std::move(out), inputs,
      [x, w, b, stride, pad, h, wd, ci, k, co, oh, ow](std::span<const double> g) {
        auto gx = grad_sink(x);
        auto gw = grad_sink(w);
        auto gb = grad_sink(b);
        const double* xv = x.values().data();
        const double* wv = w.values().data();
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* grow = g.data() + (oy * ow + ox) * co;
            if (!gb.empty()) {
              for (std::size_t o = 0; o < co; ++o) gb[o] += grow[o];
            }
            for (std::size_t ky = 0; ky < k; ++ky) {
              long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                std::size_t in_off = (static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)) * ci;
                std::size_t w_off = (ky * k + kx) * ci * co;
                for (std::size_t c = 0; c < ci; ++c) {
                  const double* wrow = wv + w_off + c * co;
                  if (!gx.empty()) {
                    double acc = 0.0;
                    for (std::size_t o = 0; o < co; ++o) acc += grow[o] * wrow[o];
                    gx[in_off + c] += acc;
                  }
                  if (!gw.empty()) {
                    double v = xv[in_off + c];
                    double* gwrow = gw.data() + w_off + c * co;
                    for (std::size_t o = 0; o < co; ++o) gwrow[o] += v * grow[o];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor pad_replicate(const Tensor& x, int pad) {
  require_rank("pad_replicate", x, 3);
  if (pad < 0) throw ValidationError("pad_replicate: negative pad");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t p = static_cast<std::size_t>(pad);
  const std::size_t oh = h + 2 * p, ow = w + 2 * p;
  std::vector<std::size_t> src(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    std::size_t sy = std::min(h - 1, y < p ? 0 : y - p);
    for (std::size_t xx = 0; xx < ow; ++xx) {
      std::size_t sx = std::min(w - 1, xx < p ? 0 : xx - p);
      src[y * ow + xx] = sy * w + sx;
    }
  }
  std::vector<double> out(oh * ow * c);
  auto xv = x.values();
  for (std::size_t i = 0; i < src.size(); ++i) std::copy_n(xv.begin() + src[i] * c, c, out.begin() + i * c);
  return make_result("pad_replicate", {oh, ow, c}, std::move(out), {x},
                     [x, src, c](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t i = 0; i < src.size(); ++i) {
                         for (std::size_t j = 0; j < c; ++j) gx[src[i] * c + j] += g[i * c + j];
                       }
                     });
}

namespace {

struct Tap1d {
  std::size_t i0, i1;
  double f;
};

std::vector<Tap1d> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap1d> taps(out);
  double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    auto i0 = static_cast<std::size_t>(std::floor(s));
    std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t height, std::size_t width) {
  require_rank("resize_bilinear", x, 3);
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h == 0 || w == 0 || height == 0 || width == 0) throw ValidationError("resize_bilinear: empty map");
  auto ty = resize_taps(h, height);
  auto tx = resize_taps(w, width);
  std::vector<double> out(height * width * c);
  auto xv = x.values();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t xx = 0; xx < width; ++xx) {
      const auto& a = ty[y];
      const auto& b = tx[xx];
      double w00 = (1 - a.f) * (1 - b.f), w01 = (1 - a.f) * b.f, w10 = a.f * (1 - b.f), w11 = a.f * b.f;
      for (std::size_t j = 0; j < c; ++j) {
        out[(y * width + xx) * c + j] =
            w00 * xv[(a.i0 * w + b.i0) * c + j] + w01 * xv[(a.i0 * w + b.i1) * c + j] +
            w10 * xv[(a.i1 * w + b.i0) * c + j] + w11 * xv[(a.i1 * w + b.i1) * c + j];
      }
    }
  }
  return make_result("resize_bilinear", {height, width, c}, std::move(out), {x},
                     [x, ty, tx, w, c, height, width](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t y = 0; y < height; ++y) {
                         for (std::size_t xx = 0; xx < width; ++xx) {
                           const auto& a = ty[y];
                           const auto& b = tx[xx];
                           double w00 = (1 - a.f) * (1 - b.f), w01 = (1 - a.f) * b.f;
                           double w10 = a.f * (1 - b.f), w11 = a.f * b.f;
                           for (std::size_t j = 0; j < c; ++j) {
                             double gv = g[(y * width + xx) * c + j];
                             gx[(a.i0 * w + b.i0) * c + j] += w00 * gv;
                             gx[(a.i0 * w + b.i1) * c + j] += w01 * gv;
                             gx[(a.i1 * w + b.i0) * c + j] += w10 * gv;
                             gx[(a.i1 * w + b.i1) * c + j] += w11 * gv;
                           }
                         }
                       }
                     });
}

namespace {

struct BilinearTap {
  std::size_t index;  // pixel index, or npos when off-grid
  double weight;
};

constexpr std::size_t kOffGrid = static_cast<std::size_t>(-1);

}  // namespace

Tensor sample_bilinear(const Tensor& x, std::span<const SamplePoint> points,
                       std::vector<std::uint8_t>* valid) {
  require_rank("sample_bilinear", x, 3);
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  std::vector<std::array<BilinearTap, 4>> taps(points.size());
  if (valid) valid->assign(points.size(), 0);
  std::vector<double> out(points.size() * c, 0.0);
  auto xv = x.values();
  const double wmax = static_cast<double>(w) - 0.5, hmax = static_cast<double>(h) - 0.5;
  for (std::size_t n = 0; n < points.size(); ++n) {
    auto& t = taps[n];
    for (auto& tap : t) tap = {kOffGrid, 0.0};
    const double px = points[n].x, py = points[n].y;
    if (!(px >= -0.5 && px <= wmax && py >= -0.5 && py <= hmax)) continue;
    if (valid) (*valid)[n] = 1;
    const double fx0 = std::floor(px), fy0 = std::floor(py);
    const double fx = px - fx0, fy = py - fy0;
    const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
    const long xs[2] = {x0, x0 + 1};
    const long ys[2] = {y0, y0 + 1};
    const double wx[2] = {1.0 - fx, fx};
    const double wy[2] = {1.0 - fy, fy};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        double weight = wy[a] * wx[b];
        if (weight == 0.0 || ys[a] < 0 || xs[b] < 0 || ys[a] >= static_cast<long>(h) ||
            xs[b] >= static_cast<long>(w)) {
          continue;
        }
        std::size_t idx = static_cast<std::size_t>(ys[a]) * w + static_cast<std::size_t>(xs[b]);
        t[a * 2 + b] = {idx, weight};
        for (std::size_t j = 0; j < c; ++j) out[n * c + j] += weight * xv[idx * c + j];
      }
    }
  }
  return make_result("sample_bilinear", {points.size(), c}, std::move(out), {x},
                     [x, taps, c](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t n = 0; n < taps.size(); ++n) {
                         for (const auto& tap : taps[n]) {
                           if (tap.index == kOffGrid) continue;
                           for (std::size_t j = 0; j < c; ++j) gx[tap.index * c + j] += tap.weight * g[n * c + j];
                         }
                       }
                     });
}

Tensor normalize_rows(const Tensor& x) {
  std::size_t c = last_dim(x);
  std::size_t rows = x.numel() / c;
  std::vector<double> out(x.numel());
  std::vector<double> norms(rows);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 1e-12;
    for (std::size_t j = 0; j < c; ++j) ss += xv[r * c + j] * xv[r * c + j];
    norms[r] = std::sqrt(ss);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] / norms[r];
  }
  std::vector<double> y = out;
  return make_result("normalize_rows", x.shape(), std::move(out), {x},
                     [x, y, norms, c, rows](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
                         for (std::size_t j = 0; j < c; ++j) {
                           gx[r * c + j] += (g[r * c + j] - y[r * c + j] * dot) / norms[r];
                         }
                       }
                     });
}

}  // namespace splatforge::ops
