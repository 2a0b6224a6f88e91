#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agsfcos/box.hpp"

namespace agsfcos {

struct EvalImage {
  std::int64_t image_id = 0;
  std::vector<GroundTruthBox> gts;
  std::vector<Detection> dets;
};

// Fractions in [0,1]; -1 marks a metric with no ground truth to score.
struct EvalResult {
  double ap = -1, ap50 = -1, ap75 = -1;
  double ap_s = -1, ap_m = -1, ap_l = -1;
  double ar = -1, ar_s = -1, ar_m = -1, ar_l = -1;
};

struct CocoEvalParams {
  std::vector<double> iou_thresholds;  // 0.50:0.05:0.95
  std::size_t recall_points = 101;
  std::size_t max_detections = 100;
  // [lo, hi] box-area buckets: all, small, medium, large.
  std::array<std::array<double, 2>, 4> area_ranges = {{{0.0, 1e10},
                                                       {0.0, 32.0 * 32.0},
                                                       {32.0 * 32.0, 96.0 * 96.0},
                                                       {96.0 * 96.0, 1e10}}};

  CocoEvalParams();
};

// COCO detection protocol over every class present in the ground truth:
// per image, detections are ranked by score and greedily matched to the
// unmatched ground truth of highest IoU at or above each threshold; AP is
// the 101-point interpolated precision, AR the final recall, both averaged
// over thresholds and classes. Throws InputError on duplicate image ids.
EvalResult coco_eval(std::span<const EvalImage> images,
                     const CocoEvalParams& params = {});

std::string format_eval(const EvalResult& r);

}  // namespace agsfcos
