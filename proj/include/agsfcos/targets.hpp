#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "agsfcos/box.hpp"
#include "agsfcos/config.hpp"

namespace agsfcos {

inline constexpr int kBackground = -1;

struct LevelTargets {
  std::size_t stride = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> class_target;   // [h*w], kBackground or a class id
  std::vector<double> ltrb;        // [4][h*w]; zero at background
  std::vector<double> centerness;  // [h*w]; zero at background

  std::size_t locations() const { return height * width; }
  // Image-space point sampled by feature location (x, y).
  double point_x(std::size_t x) const { return stride / 2.0 + double(x * stride); }
  double point_y(std::size_t y) const { return stride / 2.0 + double(y * stride); }
  std::size_t num_positive() const;
};

struct TargetMap {
  std::vector<LevelTargets> levels;  // finest first
  std::size_t num_positive() const;
};

// sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b)); all distances must be > 0.
double centerness(double l, double t, double r, double b);

// Location (x, y) on a level of stride s samples the image point
// (s/2 + x*s, s/2 + y*s). It is positive for a box that strictly contains
// the point when the largest side distance falls in the level's range;
// among several such boxes the smallest area wins.
TargetMap assign_targets(std::span<const GroundTruthBox> gts,
                         std::size_t image_height, std::size_t image_width,
                         const AssignerConfig& config);

}  // namespace agsfcos
