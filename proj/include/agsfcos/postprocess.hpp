#pragma once

#include <span>
#include <vector>

#include "agsfcos/box.hpp"
#include "agsfcos/config.hpp"
#include "agsfcos/sepc_head.hpp"

namespace agsfcos {

// Candidate detections for one image of the batch: per location and class,
// score = sigmoid(cls) * sigmoid(ctr) and box = (px-l, py-t, px+r, py+b)
// clipped to the image. Scores at or below the threshold are dropped and at
// most pre_nms_top_k candidates survive per level.
std::vector<Detection> decode(const std::vector<LevelOutput>& outputs,
                              std::size_t image_index,
                              std::span<const std::size_t> strides,
                              std::size_t image_height, std::size_t image_width,
                              const PostprocessConfig& config);

// Strict total order used everywhere detections are ranked: score
// descending, then box coordinates and class ascending.
bool detection_before(const Detection& a, const Detection& b);

// Greedy class-aware suppression: a box is dropped when its IoU with an
// already kept box of the same class exceeds `iou_threshold`.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

// decode + nms + cap at max_detections.
std::vector<Detection> postprocess(const std::vector<LevelOutput>& outputs,
                                   std::size_t image_index,
                                   std::span<const std::size_t> strides,
                                   std::size_t image_height, std::size_t image_width,
                                   const PostprocessConfig& config);

}  // namespace agsfcos
