#pragma once

#include <array>
#include <string>
#include <vector>

#include "agsfcos/backbone.hpp"
#include "agsfcos/parameters.hpp"
#include "agsfcos/tensor.hpp"

namespace agsfcos {

// Pyramid maps ordered finest first (P3, P4, P5), all of width D.
struct PyramidLevels {
  std::vector<Tensor> maps;

  std::size_t size() const { return maps.size(); }
  const Tensor& operator[](std::size_t i) const { return maps[i]; }
};

struct FpnParams {
  std::array<Tensor, 3> lateral_w;  // [D,Ck,1,1]
  std::array<Tensor, 3> lateral_b;  // [D]
  std::array<Tensor, 3> output_w;   // [D,D,3,3], undefined when smoothing is off
  std::array<Tensor, 3> output_b;
  std::size_t width = 0;
  bool smooth = true;
};

FpnParams make_fpn(ParameterSet& params, const std::string& prefix,
                   const std::array<std::size_t, 3>& in_channels,
                   std::size_t width, bool smooth, Rng& rng);

// P5 = out5(lat5(C5))
// P4 = out4(lat4(C4) + up2(lat5(C5)))
// P3 = out3(lat3(C3) + up2(lat4(C4) + up2(lat5(C5))))
PyramidLevels fpn_forward(const FeatureLevels& levels, const FpnParams& params);

}  // namespace agsfcos
