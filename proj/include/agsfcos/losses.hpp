#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "agsfcos/box.hpp"
#include "agsfcos/config.hpp"
#include "agsfcos/sepc_head.hpp"
#include "agsfcos/targets.hpp"
#include "agsfcos/tensor.hpp"

namespace agsfcos {

inline constexpr double kFocalEps = 1e-12;

/// Focal loss over probabilities with binary targets:
///   y = 1:  -alpha (1 - p)^gamma log p
///   y = 0:  -(1 - alpha) p^gamma log(1 - p)
/// p is clamped to [eps, 1 - eps] (no gradient outside). The sum over all
/// entries is divided by max(1, num_positive).
Tensor focal_loss(const Tensor& prob, std::span<const double> targets,
                  double alpha, double gamma, std::size_t num_positive);

struct CenternessLoss {
  Tensor value;
  bool no_positives = false;
};

// Mean BCE of sigmoid(logits) against center-ness targets; returns a zero
// constant with no_positives set when there are no entries.
CenternessLoss centerness_bce(const Tensor& logits, std::span<const double> targets);

// Column view of P predicted boxes, each tensor [P].
struct BoxTensors {
  Tensor x1, y1, x2, y2;
};

BoxTensors box_tensors(std::span<const Box> boxes);

/// Per-box regression loss [P].
///   iou:   1 - IoU
///   giou:  1 - IoU + (enclosing - union) / enclosing
///   ciou:  1 - IoU + rho^2 / c^2 + alpha v, with
///          v = 4/pi^2 (atan(w_gt/h_gt) - atan(w/h))^2 and
///          alpha = v / ((1 - IoU) + v) held constant.
/// A non-empty `fixed_trade_off` replaces the computed alpha per box, which
/// lets finite differences see the same constant the gradient assumes.
/// Throws InputError on degenerate predictions or targets.
Tensor box_regression_loss(const BoxTensors& pred, std::span<const Box> gt,
                           RegressionLoss kind,
                           std::span<const double> fixed_trade_off = {});

// alpha of the CIoU penalty for each box pair.
std::vector<double> ciou_trade_off(const BoxTensors& pred, std::span<const Box> gt);

double ciou_loss(const Box& pred, const Box& gt);

struct LossBreakdown {
  Tensor cls;
  Tensor reg;
  Tensor ctr;
  Tensor total;
  std::size_t num_positive = 0;
  bool ctr_empty = false;
};

// Unit-weight sum of focal, regression and center-ness losses over a batch.
// `targets` holds one TargetMap per image in the batch. The regression term
// is weighted by center-ness targets and divided by their sum.
LossBreakdown total_loss(const std::vector<LevelOutput>& outputs,
                         std::span<const TargetMap> targets,
                         const LossConfig& config);

}  // namespace agsfcos
