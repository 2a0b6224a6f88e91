#pragma once

// Scalar reference formulas for the detection losses, written directly from
// their definitions with no shared code.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

struct RefBox {
  double x1, y1, x2, y2;
};

inline double ref_iou(const RefBox& a, const RefBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  return inter / (area_a + area_b - inter);
}

inline double ref_ciou(const RefBox& p, const RefBox& g) {
  const double iou = ref_iou(p, g);
  const double pcx = (p.x1 + p.x2) / 2, pcy = (p.y1 + p.y2) / 2;
  const double gcx = (g.x1 + g.x2) / 2, gcy = (g.y1 + g.y2) / 2;
  const double rho2 = (pcx - gcx) * (pcx - gcx) + (pcy - gcy) * (pcy - gcy);
  const double cw = std::max(p.x2, g.x2) - std::min(p.x1, g.x1);
  const double ch = std::max(p.y2, g.y2) - std::min(p.y1, g.y1);
  const double c2 = cw * cw + ch * ch;
  const double d = std::atan((g.x2 - g.x1) / (g.y2 - g.y1)) - std::atan((p.x2 - p.x1) / (p.y2 - p.y1));
  const double v = 4.0 / (std::numbers::pi * std::numbers::pi) * d * d;
  const double alpha = (1 - iou + v) > 0 ? v / (1 - iou + v) : 0.0;
  return 1 - iou + rho2 / c2 + alpha * v;
}

inline double ref_giou(const RefBox& p, const RefBox& g) {
  const double iou = ref_iou(p, g);
  const double iw = std::max(0.0, std::min(p.x2, g.x2) - std::max(p.x1, g.x1));
  const double ih = std::max(0.0, std::min(p.y2, g.y2) - std::max(p.y1, g.y1));
  const double uni = (p.x2 - p.x1) * (p.y2 - p.y1) + (g.x2 - g.x1) * (g.y2 - g.y1) - iw * ih;
  const double enc = (std::max(p.x2, g.x2) - std::min(p.x1, g.x1)) *
                     (std::max(p.y2, g.y2) - std::min(p.y1, g.y1));
  return 1 - iou + (enc - uni) / enc;
}

// One focal term, unnormalized.
inline double ref_focal_term(double p, int y, double alpha, double gamma) {
  p = std::clamp(p, 1e-12, 1 - 1e-12);
  if (y == 1) return -alpha * std::pow(1 - p, gamma) * std::log(p);
  return -(1 - alpha) * std::pow(p, gamma) * std::log(1 - p);
}

inline double ref_centerness(double l, double t, double r, double b) {
  return std::sqrt((std::min(l, r) / std::max(l, r)) * (std::min(t, b) / std::max(t, b)));
}

inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double ref_bce(double logit, double target) {
  const double p = ref_sigmoid(logit);
  return -(target * std::log(p) + (1 - target) * std::log(1 - p));
}

}  // namespace oracle
