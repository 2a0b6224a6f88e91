#include "agsfcos/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "agsfcos/errors.hpp"

namespace agsfcos {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.class_id) <
         std::tie(b.box.x1, b.box.y1, b.box.x2, b.box.y2, b.class_id);
}

std::vector<Detection> decode(const std::vector<LevelOutput>& outputs,
                              std::size_t image_index,
                              std::span<const std::size_t> strides,
                              std::size_t image_height, std::size_t image_width,
                              const PostprocessConfig& config) {
  if (strides.size() != outputs.size()) {
    throw DimensionError("decode: one stride per level required");
  }
  std::vector<Detection> all;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const LevelOutput& out = outputs[l];
    const std::size_t classes = out.cls_logits.dim(1);
    const std::size_t h = out.cls_logits.dim(2);
    const std::size_t w = out.cls_logits.dim(3);
    const std::size_t area = h * w;
    const double s = static_cast<double>(strides[l]);
    auto cls = out.cls_logits.values();
    auto ctr = out.ctr_logits.values();
    auto dist = out.distances.values();
    std::vector<Detection> level;
    for (std::size_t i = 0; i < area; ++i) {
      const double centre = stable_sigmoid(ctr[image_index * area + i]);
      const double px = s / 2.0 + s * double(i % w);
      const double py = s / 2.0 + s * double(i / w);
      const double* d = dist.data() + image_index * 4 * area + i;
      Box box{std::clamp(px - d[0], 0.0, double(image_width)),
              std::clamp(py - d[area], 0.0, double(image_height)),
              std::clamp(px + d[2 * area], 0.0, double(image_width)),
              std::clamp(py + d[3 * area], 0.0, double(image_height))};
      for (std::size_t c = 0; c < classes; ++c) {
        const double score =
            stable_sigmoid(cls[(image_index * classes + c) * area + i]) * centre;
        if (score <= config.score_threshold) continue;
        level.push_back({box, c, score});
      }
    }
    std::sort(level.begin(), level.end(), detection_before);
    if (level.size() > config.pre_nms_top_k) level.resize(config.pre_nms_top_k);
    all.insert(all.end(), level.begin(), level.end());
  }
  return all;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::sort(detections.begin(), detections.end(), detection_before);
  std::vector<Detection> kept;
  for (const Detection& d : detections) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> postprocess(const std::vector<LevelOutput>& outputs,
                                   std::size_t image_index,
                                   std::span<const std::size_t> strides,
                                   std::size_t image_height, std::size_t image_width,
                                   const PostprocessConfig& config) {
  std::vector<Detection> dets = decode(outputs, image_index, strides, image_height,
                                       image_width, config);
  // Clipping can collapse a box onto the image border.
  std::erase_if(dets, [](const Detection& d) { return d.box.degenerate(); });
  dets = nms(std::move(dets), config.nms_iou);
  if (dets.size() > config.max_detections) dets.resize(config.max_detections);
  return dets;
}

}  // namespace agsfcos
