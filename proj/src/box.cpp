#include "agsfcos/box.hpp"

#include <algorithm>
#include <sstream>

namespace agsfcos {

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::string to_string(const Box& b) {
  std::ostringstream os;
  os << '[' << b.x1 << ',' << b.y1 << ',' << b.x2 << ',' << b.y2 << ']';
  return os.str();
}

}  // namespace agsfcos
