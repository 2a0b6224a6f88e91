#include "agsfcos/fpn.hpp"

#include "agsfcos/errors.hpp"
#include "agsfcos/ops.hpp"

namespace agsfcos {

namespace {

void require_double(const Tensor& fine, const Tensor& coarse, const char* what) {
  if (fine.rank() != 4 || coarse.rank() != 4 ||
      fine.dim(2) != 2 * coarse.dim(2) || fine.dim(3) != 2 * coarse.dim(3)) {
    throw DimensionError(std::string("fpn: ") + what +
                         " must be exactly twice the next level, got " +
                         shape_str(fine.shape()) + " vs " +
                         shape_str(coarse.shape()));
  }
}

}  // namespace

FpnParams make_fpn(ParameterSet& params, const std::string& prefix,
                   const std::array<std::size_t, 3>& in_channels,
                   std::size_t width, bool smooth, Rng& rng) {
  FpnParams p;
  p.width = width;
  p.smooth = smooth;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string level = std::to_string(i + 3);
    p.lateral_w[i] = params.add(prefix + ".lateral" + level + ".w",
                                kaiming_conv_weight({width, in_channels[i], 1, 1}, rng));
    p.lateral_b[i] = params.add(prefix + ".lateral" + level + ".b", Tensor({width}, 0.0));
    if (smooth) {
      p.output_w[i] = params.add(prefix + ".output" + level + ".w",
                                 kaiming_conv_weight({width, width, 3, 3}, rng));
      p.output_b[i] = params.add(prefix + ".output" + level + ".b", Tensor({width}, 0.0));
    }
  }
  return p;
}

PyramidLevels fpn_forward(const FeatureLevels& levels, const FpnParams& p) {
  require_double(levels.c4, levels.c5, "C4");
  require_double(levels.c3, levels.c4, "C3");

  const Tensor lat5 = conv2d(levels.c5, p.lateral_w[2], p.lateral_b[2], 1, 0);
  const Tensor merged4 = add(conv2d(levels.c4, p.lateral_w[1], p.lateral_b[1], 1, 0),
                             bilinear_upsample_2x(lat5));
  const Tensor merged3 = add(conv2d(levels.c3, p.lateral_w[0], p.lateral_b[0], 1, 0),
                             bilinear_upsample_2x(merged4));

  auto smooth = [&](const Tensor& m, std::size_t i) {
    return p.smooth ? conv2d(m, p.output_w[i], p.output_b[i], 1, 1) : m;
  };
  return {{smooth(merged3, 0), smooth(merged4, 1), smooth(lat5, 2)}};
}

}  // namespace agsfcos
