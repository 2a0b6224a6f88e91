#include "agsfcos/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "agsfcos/errors.hpp"
#include "agsfcos/ops.hpp"

namespace agsfcos {

using detail::grad_sink;
using detail::make_result;

namespace {

// gamma * base^(gamma - 1), defined as 0 for gamma == 0.
double focal_weight_slope(double base, double gamma) {
  return gamma == 0.0 ? 0.0 : gamma * std::pow(base, gamma - 1.0);
}

Tensor constant(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

}  // namespace

Tensor focal_loss(const Tensor& prob, std::span<const double> targets,
                  double alpha, double gamma, std::size_t num_positive) {
  if (targets.size() != prob.numel()) {
    throw DimensionError("focal_loss: target count mismatch");
  }
  for (double t : targets) {
    if (t != 0.0 && t != 1.0) throw InputError("focal_loss: targets must be 0 or 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0) || !(gamma >= 0.0)) {
    throw InputError("focal_loss: need alpha in (0,1) and gamma >= 0");
  }
  const double norm = std::max<double>(1.0, static_cast<double>(num_positive));
  auto pv = prob.values();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], kFocalEps, 1.0 - kFocalEps);
    if (targets[i] == 1.0) {
      total += -alpha * std::pow(1.0 - p, gamma) * std::log(p);
    } else {
      total += -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
    }
  }
  auto t = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
  return make_result(
      {}, {total / norm}, {&prob}, "focal_loss",
      [prob, t, alpha, gamma, norm](std::span<const double> g,
                                    std::span<const double>) {
        auto dp = grad_sink(prob);
        if (dp.empty()) return;
        auto pv = prob.values();
        const double scale = g[0] / norm;
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double p = pv[i];
          if (p < kFocalEps || p > 1.0 - kFocalEps) continue;
          double d;
          if ((*t)[i] == 1.0) {
            d = alpha * (focal_weight_slope(1.0 - p, gamma) * std::log(p) -
                         std::pow(1.0 - p, gamma) / p);
          } else {
            d = -(1.0 - alpha) * (focal_weight_slope(p, gamma) * std::log(1.0 - p) -
                                  std::pow(p, gamma) / (1.0 - p));
          }
          dp[i] += scale * d;
        }
      });
}

CenternessLoss centerness_bce(const Tensor& logits, std::span<const double> targets) {
  if (logits.numel() == 0) return {Tensor::scalar(0.0), true};
  return {mean(bce_with_logits(logits, targets)), false};
}

BoxTensors box_tensors(std::span<const Box> boxes) {
  std::vector<double> x1, y1, x2, y2;
  for (const Box& b : boxes) {
    x1.push_back(b.x1);
    y1.push_back(b.y1);
    x2.push_back(b.x2);
    y2.push_back(b.y2);
  }
  return {constant(x1), constant(y1), constant(x2), constant(y2)};
}

Tensor box_regression_loss(const BoxTensors& pred, std::span<const Box> gt,
                           RegressionLoss kind, std::span<const double> fixed_trade_off) {
  const std::size_t n = gt.size();
  if (pred.x1.numel() != n || pred.y1.numel() != n || pred.x2.numel() != n ||
      pred.y2.numel() != n) {
    throw DimensionError("box_regression_loss: prediction/target count mismatch");
  }
  for (const Box& b : gt) {
    if (b.degenerate()) throw InputError("box_regression_loss: degenerate target " + to_string(b));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(pred.x2[i] > pred.x1[i]) || !(pred.y2[i] > pred.y1[i])) {
      throw InputError("box_regression_loss: degenerate prediction");
    }
  }
  const BoxTensors g = box_tensors(gt);

  const Tensor pw = sub(pred.x2, pred.x1);
  const Tensor ph = sub(pred.y2, pred.y1);
  const Tensor gw = sub(g.x2, g.x1);
  const Tensor gh = sub(g.y2, g.y1);

  const Tensor inter_w = relu(sub(minimum(pred.x2, g.x2), maximum(pred.x1, g.x1)));
  const Tensor inter_h = relu(sub(minimum(pred.y2, g.y2), maximum(pred.y1, g.y1)));
  const Tensor inter = mul(inter_w, inter_h);
  const Tensor uni = sub(add(mul(pw, ph), mul(gw, gh)), inter);
  const Tensor overlap = div(inter, uni);
  Tensor loss = add_scalar(scale(overlap, -1.0), 1.0);
  if (kind == RegressionLoss::kIoU) return loss;

  const Tensor enclose_w = sub(maximum(pred.x2, g.x2), minimum(pred.x1, g.x1));
  const Tensor enclose_h = sub(maximum(pred.y2, g.y2), minimum(pred.y1, g.y1));
  if (kind == RegressionLoss::kGIoU) {
    const Tensor enclose = mul(enclose_w, enclose_h);
    return add(loss, div(sub(enclose, uni), enclose));
  }

  const Tensor diag2 = add(square(enclose_w), square(enclose_h));
  const Tensor dx = scale(sub(add(pred.x1, pred.x2), add(g.x1, g.x2)), 0.5);
  const Tensor dy = scale(sub(add(pred.y1, pred.y2), add(g.y1, g.y2)), 0.5);
  const Tensor rho2 = add(square(dx), square(dy));

  const double k = 4.0 / (std::numbers::pi * std::numbers::pi);
  const Tensor v = scale(square(sub(atan(div(gw, gh)), atan(div(pw, ph)))), k);
  std::vector<double> trade_off(n);
  if (!fixed_trade_off.empty()) {
    if (fixed_trade_off.size() != n) {
      throw DimensionError("box_regression_loss: fixed trade-off count mismatch");
    }
    trade_off.assign(fixed_trade_off.begin(), fixed_trade_off.end());
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double denom = (1.0 - overlap[i]) + v[i];
      trade_off[i] = denom > 0.0 ? v[i] / denom : 0.0;
    }
  }
  return add(add(loss, div(rho2, diag2)), mul(constant(trade_off), v));
}

std::vector<double> ciou_trade_off(const BoxTensors& pred, std::span<const Box> gt) {
  const double k = 4.0 / (std::numbers::pi * std::numbers::pi);
  std::vector<double> out(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Box p{pred.x1[i], pred.y1[i], pred.x2[i], pred.y2[i]};
    const double d = std::atan(gt[i].width() / gt[i].height()) -
                     std::atan(p.width() / p.height());
    const double v = k * d * d;
    const double denom = (1.0 - iou(p, gt[i])) + v;
    out[i] = denom > 0.0 ? v / denom : 0.0;
  }
  return out;
}

double ciou_loss(const Box& pred, const Box& gt) {
  NoGradScope no_grad;
  const Box p[] = {pred};
  const Box g[] = {gt};
  if (pred.degenerate()) throw InputError("ciou_loss: degenerate prediction " + to_string(pred));
  return box_regression_loss(box_tensors(p), g, RegressionLoss::kCIoU).item();
}

LossBreakdown total_loss(const std::vector<LevelOutput>& outputs,
                         std::span<const TargetMap> targets,
                         const LossConfig& config) {
  if (outputs.empty()) throw DimensionError("total_loss: no levels");
  const std::size_t batch = outputs[0].cls_logits.dim(0);
  const std::size_t classes = outputs[0].cls_logits.dim(1);
  if (targets.size() != batch) {
    throw DimensionError("total_loss: expected " + std::to_string(batch) +
                         " target maps, got " + std::to_string(targets.size()));
  }
  for (const TargetMap& t : targets) {
    if (t.levels.size() != outputs.size()) {
      throw DimensionError("total_loss: target/output level count mismatch");
    }
  }

  std::vector<Tensor> probs;
  std::vector<double> cls_targets;
  std::vector<Tensor> side[4];
  std::vector<Tensor> ctr_parts;
  std::vector<Box> gt_boxes;
  std::vector<double> points_x, points_y, ctr_targets;
  std::size_t num_positive = 0;

  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const LevelOutput& out = outputs[l];
    const std::size_t h = out.cls_logits.dim(2);
    const std::size_t w = out.cls_logits.dim(3);
    const std::size_t area = h * w;
    std::vector<double> onehot(batch * classes * area, 0.0);
    std::vector<std::size_t> side_index[4];
    std::vector<std::size_t> ctr_index;
    for (std::size_t n = 0; n < batch; ++n) {
      const LevelTargets& lt = targets[n].levels[l];
      if (lt.height != h || lt.width != w) {
        throw DimensionError("total_loss: target map extents do not match level " +
                             std::to_string(l));
      }
      for (std::size_t i = 0; i < area; ++i) {
        const int c = lt.class_target[i];
        if (c < 0) continue;
        if (static_cast<std::size_t>(c) >= classes) {
          throw InputError("total_loss: class id " + std::to_string(c) +
                           " out of range");
        }
        ++num_positive;
        onehot[(n * classes + c) * area + i] = 1.0;
        for (std::size_t k = 0; k < 4; ++k) {
          side_index[k].push_back((n * 4 + k) * area + i);
        }
        ctr_index.push_back(n * area + i);
        const double px = lt.point_x(i % w);
        const double py = lt.point_y(i / w);
        points_x.push_back(px);
        points_y.push_back(py);
        gt_boxes.push_back({px - lt.ltrb[i], py - lt.ltrb[area + i],
                            px + lt.ltrb[2 * area + i], py + lt.ltrb[3 * area + i]});
        ctr_targets.push_back(lt.centerness[i]);
      }
    }
    probs.push_back(sigmoid(out.cls_logits));
    cls_targets.insert(cls_targets.end(), onehot.begin(), onehot.end());
    if (!ctr_index.empty()) {
      for (std::size_t k = 0; k < 4; ++k) side[k].push_back(take(out.distances, side_index[k]));
      ctr_parts.push_back(take(out.ctr_logits, ctr_index));
    }
  }

  LossBreakdown result;
  result.num_positive = num_positive;
  result.cls = focal_loss(concat(probs), cls_targets, config.focal_alpha,
                          config.focal_gamma, num_positive);
  if (num_positive == 0) {
    result.reg = Tensor::scalar(0.0);
    result.ctr = Tensor::scalar(0.0);
    result.ctr_empty = true;
  } else {
    const Tensor px = constant(points_x);
    const Tensor py = constant(points_y);
    const BoxTensors pred{sub(px, concat(side[0])), sub(py, concat(side[1])),
                          add(px, concat(side[2])), add(py, concat(side[3]))};
    const Tensor per_box = box_regression_loss(pred, gt_boxes, config.regression);
    double weight_sum = 0.0;
    for (double c : ctr_targets) weight_sum += c;
    result.reg = scale(sum(mul(per_box, constant(ctr_targets))), 1.0 / weight_sum);
    CenternessLoss ctr = centerness_bce(concat(ctr_parts), ctr_targets);
    result.ctr = ctr.value;
    result.ctr_empty = ctr.no_positives;
  }
  result.total = add(add(result.cls, result.reg), result.ctr);
  return result;
}

}  // namespace agsfcos
