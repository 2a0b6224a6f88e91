#include "agsfcos/targets.hpp"

#include <algorithm>
#include <cmath>

#include "agsfcos/errors.hpp"

namespace agsfcos {

std::size_t LevelTargets::num_positive() const {
  return static_cast<std::size_t>(std::count_if(
      class_target.begin(), class_target.end(), [](int c) { return c >= 0; }));
}

std::size_t TargetMap::num_positive() const {
  std::size_t total = 0;
  for (const auto& level : levels) total += level.num_positive();
  return total;
}

double centerness(double l, double t, double r, double b) {
  if (!(l > 0 && t > 0 && r > 0 && b > 0)) {
    throw InputError("centerness: side distances must be positive");
  }
  return std::sqrt((std::min(l, r) / std::max(l, r)) *
                   (std::min(t, b) / std::max(t, b)));
}

TargetMap assign_targets(std::span<const GroundTruthBox> gts,
                         std::size_t image_height, std::size_t image_width,
                         const AssignerConfig& config) {
  for (const auto& gt : gts) {
    const Box& b = gt.box;
    if (b.degenerate()) {
      throw InputError("assign_targets: degenerate ground-truth box " + to_string(b));
    }
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > double(image_width) ||
        b.y2 > double(image_height)) {
      throw InputError("assign_targets: box " + to_string(b) + " outside image");
    }
  }
  if (config.ranges.size() != config.strides.size()) {
    throw ConfigError("assign_targets: one range per stride required");
  }

  TargetMap map;
  for (std::size_t k = 0; k < config.strides.size(); ++k) {
    LevelTargets level;
    level.stride = config.strides[k];
    level.height = (image_height + level.stride - 1) / level.stride;
    level.width = (image_width + level.stride - 1) / level.stride;
    const std::size_t n = level.locations();
    level.class_target.assign(n, kBackground);
    level.ltrb.assign(4 * n, 0.0);
    level.centerness.assign(n, 0.0);
    const auto [lo, hi] = config.ranges[k];

    for (std::size_t y = 0; y < level.height; ++y) {
      const double py = level.point_y(y);
      for (std::size_t x = 0; x < level.width; ++x) {
        const double px = level.point_x(x);
        double best_area = 0.0;
        const GroundTruthBox* best = nullptr;
        for (const auto& gt : gts) {
          const double l = px - gt.box.x1;
          const double t = py - gt.box.y1;
          const double r = gt.box.x2 - px;
          const double b = gt.box.y2 - py;
          if (!(std::min({l, t, r, b}) > 0.0)) continue;
          const double reach = std::max({l, t, r, b});
          if (!(reach > lo && reach <= hi)) continue;
          if (!best || gt.box.area() < best_area) {
            best = &gt;
            best_area = gt.box.area();
          }
        }
        if (!best) continue;
        const std::size_t i = y * level.width + x;
        const double l = px - best->box.x1;
        const double t = py - best->box.y1;
        const double r = best->box.x2 - px;
        const double b = best->box.y2 - py;
        level.class_target[i] = static_cast<int>(best->class_id);
        level.ltrb[0 * n + i] = l;
        level.ltrb[1 * n + i] = t;
        level.ltrb[2 * n + i] = r;
        level.ltrb[3 * n + i] = b;
        level.centerness[i] = centerness(l, t, r, b);
      }
    }
    map.levels.push_back(std::move(level));
  }
  return map;
}

}  // namespace agsfcos
