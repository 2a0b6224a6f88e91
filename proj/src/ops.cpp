#include "agsfcos/ops.hpp"

// Route every product through the blocked GEMM kernel. Eigen's coefficient-based
// path for tiny products peels loops by pointer alignment, which makes the
// result depend on where the allocator placed the buffers.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "agsfcos/errors.hpp"

namespace agsfcos {

using detail::grad_sink;
using detail::make_result;

namespace {

thread_local std::uint64_t g_conv_macs = 0;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

enum class Op { kN, kT };

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor, 0, Eigen::OuterStride<>>;
using View = Eigen::Map<RowMajor, 0, Eigen::OuterStride<>>;

// Row-major C[m,n] = op(A) op(B) + beta C with inner extent k and leading
// dimensions lda, ldb, ldc. beta is 0 or 1.
void gemm(Op ta, Op tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  using Eigen::Index;
  const ConstView A(a, Index(ta == Op::kN ? m : k), Index(ta == Op::kN ? k : m),
                    Eigen::OuterStride<>(Index(lda)));
  const ConstView B(b, Index(tb == Op::kN ? k : n), Index(tb == Op::kN ? n : k),
                    Eigen::OuterStride<>(Index(ldb)));
  View C(c, Index(m), Index(n), Eigen::OuterStride<>(Index(ldc)));
  if (beta == 0.0) C.setZero();
  if (ta == Op::kN && tb == Op::kN) {
    C.noalias() += A * B;
  } else if (ta == Op::kN) {
    C.noalias() += A * B.transpose();
  } else if (tb == Op::kN) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t out_area() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s + i - p][ox*s + j - p]
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t area = g.out_area();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                          static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? 0.0
                          : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t area = g.out_area();
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = dx + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + iy * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.padding == 0;
}

template <typename F, typename D>
Tensor unary(const Tensor& x, const char* op, F f, D derivative) {
  require_defined(x, op);
  require_finite(x, op);
  auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(
      x.shape(), std::move(out), {&x}, op,
      [x, derivative](std::span<const double> g, std::span<const double> y) {
        auto dx = grad_sink(x);
        if (dx.empty()) return;
        auto xv = x.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          dx[i] += g[i] * derivative(xv[i], y[i]);
        }
      });
}

// Shared row normalization for layer_norm and group_norm. affine_index maps
// (row, element) to the gamma/beta slot.
template <typename AffineIndex>
Tensor normalize_rows(const Tensor& x, std::size_t rows, std::size_t row_size,
                      const Tensor& gamma, const Tensor& beta, double eps,
                      const char* op, AffineIndex affine_index) {
  if (eps <= 0.0) throw UsageError(std::string(op) + ": eps must be > 0");
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * row_size;
    double mu = 0.0;
    for (std::size_t j = 0; j < row_size; ++j) mu += src[j];
    mu /= static_cast<double>(row_size);
    double var = 0.0;
    for (std::size_t j = 0; j < row_size; ++j) {
      const double d = src[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(row_size);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < row_size; ++j) {
      const std::size_t k = r * row_size + j;
      const std::size_t a = affine_index(r, j);
      (*xhat)[k] = (src[j] - mu) * inv;
      out[k] = gv[a] * (*xhat)[k] + bv[a];
    }
  }
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta}, op,
      [x, gamma, beta, xhat, inv_std, rows, row_size, affine_index](
          std::span<const double> g, std::span<const double>) {
        auto dx = grad_sink(x);
        auto dgamma = grad_sink(gamma);
        auto dbeta = grad_sink(beta);
        auto gv = gamma.values();
        std::vector<double> dxhat(row_size);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0;
          double mean_dx = 0.0;
          for (std::size_t j = 0; j < row_size; ++j) {
            const std::size_t k = r * row_size + j;
            const std::size_t a = affine_index(r, j);
            if (!dgamma.empty()) dgamma[a] += g[k] * (*xhat)[k];
            if (!dbeta.empty()) dbeta[a] += g[k];
            dxhat[j] = g[k] * gv[a];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * (*xhat)[k];
          }
          if (dx.empty()) continue;
          mean_d /= static_cast<double>(row_size);
          mean_dx /= static_cast<double>(row_size);
          const double inv = (*inv_std)[r];
          for (std::size_t j = 0; j < row_size; ++j) {
            const std::size_t k = r * row_size + j;
            dx[k] += inv * (dxhat[j] - mean_d - (*xhat)[k] * mean_dx);
          }
        }
      });
}

}  // namespace

std::uint64_t conv_mac_counter() { return g_conv_macs; }

void reset_conv_mac_counter() { g_conv_macs = 0; }

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  if (x.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("conv2d: expected rank-4 input and weight, got " +
                         shape_str(x.shape()) + " and " +
                         shape_str(weight.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t k = weight.dim(0);
  ConvGeometry geo{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), weight.dim(3),
                   stride, padding, 0, 0};
  if (weight.dim(1) != geo.channels) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) +
                         " does not match input channels of " +
                         shape_str(x.shape()));
  }
  if (geo.kh % 2 == 0 || geo.kw % 2 == 0) {
    throw DimensionError("conv2d: kernel extents must be odd");
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (geo.height + 2 * padding < geo.kh || geo.width + 2 * padding < geo.kw) {
    throw DimensionError("conv2d: padded input smaller than kernel");
  }
  if (bias.defined() && (bias.numel() != k)) {
    throw DimensionError("conv2d: bias must have " + std::to_string(k) +
                         " elements");
  }
  require_finite(x, "conv2d");
  geo.out_h = (geo.height + 2 * padding - geo.kh) / stride + 1;
  geo.out_w = (geo.width + 2 * padding - geo.kw) / stride + 1;

  const std::size_t patch = geo.patch();
  const std::size_t area = geo.out_area();
  const std::size_t in_plane = geo.channels * geo.height * geo.width;
  std::vector<double> out(n * k * area);
  std::vector<double> cols(is_pointwise(geo) ? 0 : patch * area);
  auto xv = x.values();
  auto wv = weight.values();
  for (std::size_t b = 0; b < n; ++b) {
    const double* src = xv.data() + b * in_plane;
    if (!is_pointwise(geo)) {
      im2col(src, geo, cols.data());
      src = cols.data();
    }
    gemm(Op::kN, Op::kN, k, area, patch, wv.data(), patch,
         src, area, 0.0, out.data() + b * k * area, area);
  }
  if (bias.defined()) {
    auto bv = bias.values();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < k; ++c) {
        double* dst = out.data() + (b * k + c) * area;
        for (std::size_t i = 0; i < area; ++i) dst[i] += bv[c];
      }
    }
  }
  g_conv_macs += static_cast<std::uint64_t>(n * k * area * patch);

  return make_result(
      {n, k, geo.out_h, geo.out_w}, std::move(out), {&x, &weight, &bias},
      "conv2d",
      [x, weight, bias, geo, n, k](std::span<const double> g,
                                   std::span<const double>) {
        auto dx = grad_sink(x);
        auto dw = grad_sink(weight);
        auto db = bias.defined() ? grad_sink(bias) : std::span<double>{};
        const std::size_t patch = geo.patch();
        const std::size_t area = geo.out_area();
        const std::size_t in_plane = geo.channels * geo.height * geo.width;
        const bool pointwise = is_pointwise(geo);
        std::vector<double> cols(pointwise ? 0 : patch * area);
        std::vector<double> dcols(pointwise ? 0 : patch * area);
        auto xv = x.values();
        auto wv = weight.values();
        for (std::size_t b = 0; b < n; ++b) {
          const double* gout = g.data() + b * k * area;
          if (!db.empty()) {
            for (std::size_t c = 0; c < k; ++c) {
              double s = 0.0;
              for (std::size_t i = 0; i < area; ++i) s += gout[c * area + i];
              db[c] += s;
            }
          }
          if (!dw.empty()) {
            const double* src = xv.data() + b * in_plane;
            if (!pointwise) {
              im2col(src, geo, cols.data());
              src = cols.data();
            }
            gemm(Op::kN, Op::kT, k, patch, area, gout, area,
                 src, area, 1.0, dw.data(), patch);
          }
          if (!dx.empty()) {
            if (pointwise) {
              gemm(Op::kT, Op::kN, patch, area, k, wv.data(), patch,
                   gout, area, 1.0, dx.data() + b * in_plane, area);
            } else {
              gemm(Op::kT, Op::kN, patch, area, k, wv.data(), patch,
                   gout, area, 0.0, dcols.data(), area);
              col2im_add(dcols.data(), geo, dx.data() + b * in_plane);
            }
          }
        }
      });
}

Tensor bilinear_upsample_2x(const Tensor& x) {
  require_defined(x, "bilinear_upsample_2x");
  if (x.rank() != 4 || x.dim(2) == 0 || x.dim(3) == 0) {
    throw DimensionError("bilinear_upsample_2x: expected [N,C,H,W] with H,W >= 1, got " +
                         shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  const std::size_t oh = 2 * h;
  const std::size_t ow = 2 * w;

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t extent) {
    std::vector<Tap> t(2 * extent);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double src =
          std::max(0.0, (static_cast<double>(i) + 0.5) * 0.5 - 0.5);
      const auto lo = std::min(static_cast<std::size_t>(src), extent - 1);
      const std::size_t hi = std::min(lo + 1, extent - 1);
      t[i] = {lo, hi, src - static_cast<double>(lo)};
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(w));

  auto xv = x.values();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const Tap& a = (*ty)[oy];
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Tap& b = (*tx)[ox];
        const double top = src[a.lo * w + b.lo] * (1 - b.frac) +
                           src[a.lo * w + b.hi] * b.frac;
        const double bottom = src[a.hi * w + b.lo] * (1 - b.frac) +
                              src[a.hi * w + b.hi] * b.frac;
        dst[oy * ow + ox] = top * (1 - a.frac) + bottom * a.frac;
      }
    }
  }
  Shape shape{x.dim(0), x.dim(1), oh, ow};
  return make_result(
      shape, std::move(out), {&x}, "bilinear_upsample_2x",
      [x, ty, tx, planes, h, w, oh, ow](std::span<const double> g,
                                        std::span<const double>) {
        auto dx = grad_sink(x);
        if (dx.empty()) return;
        for (std::size_t p = 0; p < planes; ++p) {
          double* dst = dx.data() + p * h * w;
          const double* src = g.data() + p * oh * ow;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const Tap& a = (*ty)[oy];
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const Tap& b = (*tx)[ox];
              const double v = src[oy * ow + ox];
              dst[a.lo * w + b.lo] += v * (1 - a.frac) * (1 - b.frac);
              dst[a.lo * w + b.hi] += v * (1 - a.frac) * b.frac;
              dst[a.hi * w + b.lo] += v * a.frac * (1 - b.frac);
              dst[a.hi * w + b.hi] += v * a.frac * b.frac;
            }
          }
        }
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " invalid for shape " + shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return make_result(
      s, std::move(out), {&x}, "softmax",
      [x, outer, inner, len](std::span<const double> g,
                             std::span<const double> y) {
        auto dx = grad_sink(x);
        if (dx.empty()) return;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
              dot += g[base + j * inner] * y[base + j * inner];
            }
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t k = base + j * inner;
              dx[k] += y[k] * (g[k] - dot);
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, std::size_t begin_axis, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  require_defined(gamma, "layer_norm");
  require_defined(beta, "layer_norm");
  if (begin_axis >= x.rank()) {
    throw DimensionError("layer_norm: begin axis out of range for " +
                         shape_str(x.shape()));
  }
  std::size_t rows = 1;
  for (std::size_t i = 0; i < begin_axis; ++i) rows *= x.dim(i);
  const std::size_t row_size = x.numel() / std::max<std::size_t>(rows, 1);
  const bool scalar_affine = gamma.numel() == 1;
  if ((!scalar_affine && gamma.numel() != row_size) ||
      beta.numel() != gamma.numel()) {
    throw DimensionError("layer_norm: gamma/beta must hold 1 or " +
                         std::to_string(row_size) + " values");
  }
  return normalize_rows(x, rows, row_size, gamma, beta, eps, "layer_norm",
                        [scalar_affine](std::size_t, std::size_t j) {
                          return scalar_affine ? std::size_t{0} : j;
                        });
}

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  require_defined(x, "group_norm");
  if (x.rank() < 2) throw DimensionError("group_norm: rank must be >= 2");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  if (groups == 0 || c % groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(groups) +
                      " groups do not divide " + std::to_string(c) +
                      " channels");
  }
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("group_norm: gamma/beta must hold one value per channel");
  }
  const std::size_t spatial = x.numel() / (n * c);
  const std::size_t per_group = c / groups;
  return normalize_rows(
      x, n * groups, per_group * spatial, gamma, beta, eps, "group_norm",
      [groups, per_group, spatial](std::size_t r, std::size_t j) {
        return (r % groups) * per_group + j / spatial;
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  require_defined(x, "log");
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  require_defined(x, "sqrt");
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericError("sqrt: non-positive input");
  }
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor atan(const Tensor& x) {
  return unary(
      x, "atan", [](double v) { return std::atan(v); },
      [](double v, double) { return 1.0 / (1.0 + v * v); });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

namespace {

// dfa/dfb return partial derivatives given (a, b, out).
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA dfa,
              DB dfb) {
  require_same_shape(a, b, op);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_result(
      a.shape(), std::move(out), {&a, &b}, op,
      [a, b, dfa, dfb](std::span<const double> g, std::span<const double> y) {
        auto da = grad_sink(a);
        auto db = grad_sink(b);
        auto av = a.values();
        auto bv = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!da.empty()) da[i] += g[i] * dfa(av[i], bv[i], y[i]);
          if (!db.empty()) db[i] += g[i] * dfb(av[i], bv[i], y[i]);
        }
      });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  for (double v : b.values()) {
    if (v == 0.0) throw NumericError("div: division by zero");
  }
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

// Ties route the gradient to the first operand.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  require_defined(x, "scale_by");
  require_defined(s, "scale_by");
  if (s.numel() != 1) {
    throw DimensionError("scale_by: scale must hold one element");
  }
  const double factor = s[0];
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  return make_result(
      x.shape(), std::move(out), {&x, &s}, "scale_by",
      [x, s](std::span<const double> g, std::span<const double>) {
        auto dx = grad_sink(x);
        auto ds = grad_sink(s);
        auto xv = x.values();
        const double factor = s[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!dx.empty()) dx[i] += g[i] * factor;
          acc += g[i] * xv[i];
        }
        if (!ds.empty()) ds[0] += acc;
      });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, {&x}, "sum",
                     [x](std::span<const double> g, std::span<const double>) {
                       auto dx = grad_sink(x);
                       for (double& v : dx) v += g[0];
                     });
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double count = static_cast<double>(x.numel());
  return make_result({}, {total / count}, {&x}, "mean",
                     [x, count](std::span<const double> g,
                                std::span<const double>) {
                       auto dx = grad_sink(x);
                       for (double& v : dx) v += g[0] / count;
                     });
}

Tensor broadcast_add(const Tensor& x, const Tensor& v) {
  require_defined(x, "broadcast_add");
  require_defined(v, "broadcast_add");
  if (x.rank() != 4 || v.rank() != 4 || v.dim(0) != x.dim(0) ||
      v.dim(1) != x.dim(1) || v.dim(2) != 1 || v.dim(3) != 1) {
    throw DimensionError("broadcast_add: expected [N,C,H,W] + [N,C,1,1], got " +
                         shape_str(x.shape()) + " + " + shape_str(v.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  auto xv = x.values();
  auto vv = v.values();
  std::vector<double> out(xv.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < area; ++i) {
      out[p * area + i] = xv[p * area + i] + vv[p];
    }
  }
  return make_result(
      x.shape(), std::move(out), {&x, &v}, "broadcast_add",
      [x, v, planes, area](std::span<const double> g, std::span<const double>) {
        auto dx = grad_sink(x);
        auto dv = grad_sink(v);
        for (std::size_t p = 0; p < planes; ++p) {
          double acc = 0.0;
          for (std::size_t i = 0; i < area; ++i) {
            const double gi = g[p * area + i];
            if (!dx.empty()) dx[p * area + i] += gi;
            acc += gi;
          }
          if (!dv.empty()) dv[p] += acc;
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  auto xv = x.values();
  return make_result(std::move(shape), {xv.begin(), xv.end()}, {&x}, "reshape",
                     [x](std::span<const double> g, std::span<const double>) {
                       auto dx = grad_sink(x);
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
                     });
}

Tensor take(const Tensor& x, std::span<const std::size_t> flat_indices) {
  require_defined(x, "take");
  auto xv = x.values();
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= xv.size()) {
      throw DimensionError("take: index out of range");
    }
    out[i] = xv[flat_indices[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(flat_indices.begin(),
                                                        flat_indices.end());
  return make_result({idx->size()}, std::move(out), {&x}, "take",
                     [x, idx](std::span<const double> g,
                              std::span<const double>) {
                       auto dx = grad_sink(x);
                       if (dx.empty()) return;
                       for (std::size_t i = 0; i < idx->size(); ++i) {
                         dx[(*idx)[i]] += g[i];
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts) {
  std::vector<double> out;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_defined(p, "concat");
    total += p.numel();
  }
  out.reserve(total);
  for (const Tensor& p : parts) {
    auto v = p.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  // make_result only inspects requires_grad, so one flagged part suffices.
  const Tensor* flagged = nullptr;
  for (const Tensor& p : inputs) {
    if (p.requires_grad()) {
      flagged = &p;
      break;
    }
  }
  return make_result({total}, std::move(out), {flagged}, "concat",
                     [inputs](std::span<const double> g,
                              std::span<const double>) {
                       std::size_t offset = 0;
                       for (const Tensor& p : inputs) {
                         auto dp = grad_sink(p);
                         for (std::size_t i = 0; i < dp.size(); ++i) {
                           dp[i] += g[offset + i];
                         }
                         offset += p.numel();
                       }
                     });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "batched_matmul");
  require_defined(b, "batched_matmul");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1)) {
    throw DimensionError("batched_matmul: incompatible " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), p = b.dim(2);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(batch * m * p);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(Op::kN, Op::kN, m, p, k, av.data() + i * m * k, k,
         bv.data() + i * k * p, p, 0.0, out.data() + i * m * p, p);
  }
  return make_result(
      {batch, m, p}, std::move(out), {&a, &b}, "batched_matmul",
      [a, b, batch, m, k, p](std::span<const double> g,
                             std::span<const double>) {
        auto da = grad_sink(a);
        auto db = grad_sink(b);
        auto av = a.values();
        auto bv = b.values();
        for (std::size_t i = 0; i < batch; ++i) {
          const double* gi = g.data() + i * m * p;
          if (!da.empty()) {
            gemm(Op::kN, Op::kT, m, k, p, gi, p,
                 bv.data() + i * k * p, p, 1.0, da.data() + i * m * k, k);
          }
          if (!db.empty()) {
            gemm(Op::kT, Op::kN, k, p, m, av.data() + i * m * k, k,
                 gi, p, 1.0, db.data() + i * k * p, p);
          }
        }
      });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  require_defined(logits, "bce_with_logits");
  if (targets.size() != logits.numel()) {
    throw DimensionError("bce_with_logits: target count mismatch");
  }
  for (double t : targets) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw InputError("bce_with_logits: targets must lie in [0,1]");
    }
  }
  auto zv = logits.values();
  std::vector<double> out(zv.size());
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const double z = zv[i];
    out[i] = std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  auto t = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
  return make_result(
      logits.shape(), std::move(out), {&logits}, "bce_with_logits",
      [logits, t](std::span<const double> g, std::span<const double>) {
        auto dz = grad_sink(logits);
        if (dz.empty()) return;
        auto zv = logits.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double z = zv[i];
          const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                  : std::exp(z) / (1.0 + std::exp(z));
          dz[i] += g[i] * (s - (*t)[i]);
        }
      });
}

}  // namespace agsfcos
