#pragma once

#include <cstddef>
#include <string>

namespace agsfcos {

// Axis-aligned rectangle in image pixels, corner form.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool degenerate() const { return !(x2 > x1) || !(y2 > y1); }

  friend bool operator==(const Box&, const Box&) = default;
};

struct GroundTruthBox {
  Box box;
  std::size_t class_id = 0;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct Detection {
  Box box;
  std::size_t class_id = 0;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

double iou(const Box& a, const Box& b);

std::string to_string(const Box& b);

}  // namespace agsfcos
