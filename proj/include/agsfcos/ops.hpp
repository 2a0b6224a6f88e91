#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "agsfcos/tensor.hpp"

namespace agsfcos {

inline constexpr double kNormEps = 1e-5;

/// 2-D cross-correlation over an [N,C,H,W] batch with zero padding.
///
/// `weight` is [K,C,kh,kw] with odd kernel extents; `bias` may be an
/// undefined Tensor or a [K] vector. Output extents follow
/// floor((H + 2*padding - kh) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);

// Multiply-accumulates executed by conv2d forwards on this thread.
std::uint64_t conv_mac_counter();
void reset_conv_mac_counter();

/// Doubles H and W with bilinear interpolation. Output sample i reads input
/// coordinate (i + 0.5) / 2 - 0.5 clamped to the valid range
/// (align-corners-false).
Tensor bilinear_upsample_2x(const Tensor& x);

// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes each group formed by the trailing axes [begin_axis, rank).
/// gamma/beta hold either one value or one value per group element.
Tensor layer_norm(const Tensor& x, std::size_t begin_axis, const Tensor& gamma,
                  const Tensor& beta, double eps = kNormEps);

/// Group normalization of [N,C,...] with per-channel affine gamma/beta [C].
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma,
                  const Tensor& beta, double eps = kNormEps);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// Throws NumericError on non-positive input.
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor atan(const Tensor& x);
Tensor square(const Tensor& x);

// Binary ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// x * s for a single-element tensor s; differentiable in both.
Tensor scale_by(const Tensor& x, const Tensor& s);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// x[N,C,H,W] + v[N,C,1,1]; the only broadcast pattern supported.
Tensor broadcast_add(const Tensor& x, const Tensor& v);

Tensor reshape(const Tensor& x, Shape shape);
// Gathers flat elements into a 1-D tensor.
Tensor take(const Tensor& x, std::span<const std::size_t> flat_indices);
// Flattens and concatenates into a 1-D tensor.
Tensor concat(std::span<const Tensor> parts);

// a[B,M,K] x b[B,K,P] -> [B,M,P]
Tensor batched_matmul(const Tensor& a, const Tensor& b);

// Elementwise binary cross-entropy of sigmoid(logits) against soft targets
// in [0,1], computed in the stable softplus form.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

}  // namespace agsfcos
