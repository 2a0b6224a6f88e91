#include "agsfcos/sepc_head.hpp"

#include <cmath>

#include "agsfcos/errors.hpp"
#include "agsfcos/ops.hpp"

namespace agsfcos {

namespace {

void require_double(const Tensor& fine, const Tensor& coarse) {
  if (fine.dim(2) != 2 * coarse.dim(2) || fine.dim(3) != 2 * coarse.dim(3)) {
    throw DimensionError("pconv: adjacent levels must differ by exactly 2x, got " +
                         shape_str(fine.shape()) + " vs " +
                         shape_str(coarse.shape()));
  }
}

Tensor conv_scaled(Shape shape, double gain, Rng& rng) {
  Tensor w = kaiming_conv_weight(std::move(shape), rng);
  for (double& v : w.mutable_values()) v *= gain;
  return w;
}

}  // namespace

PConvParams make_pconv(ParameterSet& params, const std::string& prefix,
                       std::size_t width, bool cross_level, Rng& rng) {
  PConvParams p;
  p.cross_level = cross_level;
  // Up to three branches are summed per level.
  const double gain = cross_level ? 1.0 / std::sqrt(3.0) : 1.0;
  const Shape kernel{width, width, 3, 3};
  if (cross_level) {
    p.w_minus1 = params.add(prefix + ".w_minus1", conv_scaled(kernel, gain, rng));
  }
  p.w_0 = params.add(prefix + ".w_0", conv_scaled(kernel, gain, rng));
  if (cross_level) {
    p.w_plus1 = params.add(prefix + ".w_plus1", conv_scaled(kernel, gain, rng));
  }
  p.bias = params.add(prefix + ".bias", Tensor({width}, 0.0));
  return p;
}

PyramidLevels pconv_forward(const PyramidLevels& levels, const PConvParams& p) {
  const std::size_t count = levels.size();
  if (p.cross_level && count < 2) {
    throw ConfigError("pconv: needs at least two pyramid levels");
  }
  for (std::size_t l = 0; l + 1 < count && p.cross_level; ++l) {
    require_double(levels[l], levels[l + 1]);
  }
  PyramidLevels out;
  out.maps.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    Tensor y = conv2d(levels[l], p.w_0, p.bias, 1, 1);
    if (p.cross_level) {
      if (l + 1 < count) {
        y = add(y, bilinear_upsample_2x(conv2d(levels[l + 1], p.w_plus1, {}, 1, 1)));
      }
      if (l > 0) {
        y = add(y, conv2d(levels[l - 1], p.w_minus1, {}, 2, 1));
      }
    }
    out.maps.push_back(y);
  }
  return out;
}

HeadParams make_head(ParameterSet& params, const std::string& prefix,
                     std::size_t width, const HeadConfig& config,
                     std::size_t num_levels, Rng& rng) {
  HeadParams h;
  h.num_classes = config.num_classes;
  const bool cross = config.tower == TowerKind::kPConv;
  for (std::size_t i = 0; i < config.depth; ++i) {
    h.tower.push_back(
        make_pconv(params, prefix + ".pconv" + std::to_string(i), width, cross, rng));
  }
  const double init_std = 0.01;
  const double prior_bias = -std::log((1.0 - config.prior_prob) / config.prior_prob);
  h.cls_w = params.add(prefix + ".cls.w",
                       normal_tensor({config.num_classes, width, 3, 3}, init_std, rng));
  h.cls_b = params.add(prefix + ".cls.b", Tensor({config.num_classes}, prior_bias));
  h.ctr_w = params.add(prefix + ".ctr.w", normal_tensor({1, width, 3, 3}, init_std, rng));
  h.ctr_b = params.add(prefix + ".ctr.b", Tensor({1}, 0.0));
  h.reg_w = params.add(prefix + ".reg.w", normal_tensor({4, width, 3, 3}, init_std, rng));
  h.reg_b = params.add(prefix + ".reg.b", Tensor({4}, std::log(config.initial_distance)));
  for (std::size_t l = 0; l < num_levels; ++l) {
    h.level_scales.push_back(
        params.add(prefix + ".scale" + std::to_string(l), Tensor({1}, 1.0)));
  }
  return h;
}

std::vector<LevelOutput> head_forward(const PyramidLevels& levels,
                                      const HeadParams& p) {
  if (levels.size() != p.level_scales.size()) {
    throw DimensionError("head: expected " + std::to_string(p.level_scales.size()) +
                         " levels, got " + std::to_string(levels.size()));
  }
  PyramidLevels x = levels;
  for (const PConvParams& layer : p.tower) {
    x = pconv_forward(x, layer);
    for (Tensor& m : x.maps) m = relu(m);
  }
  std::vector<LevelOutput> out;
  out.reserve(x.size());
  for (std::size_t l = 0; l < x.size(); ++l) {
    LevelOutput o;
    o.cls_logits = conv2d(x[l], p.cls_w, p.cls_b, 1, 1);
    o.ctr_logits = conv2d(x[l], p.ctr_w, p.ctr_b, 1, 1);
    o.reg_raw = conv2d(x[l], p.reg_w, p.reg_b, 1, 1);
    o.distances = exp(scale_by(o.reg_raw, p.level_scales[l]));
    out.push_back(std::move(o));
  }
  return out;
}

MacCount mac_count(const PyramidGeometry& geometry, const ConvShape& conv) {
  if (geometry.levels == 0 || geometry.base_height == 0 || geometry.base_width == 0) {
    throw ConfigError("mac_count: empty geometry");
  }
  std::vector<std::uint64_t> areas;
  std::size_t h = geometry.base_height;
  std::size_t w = geometry.base_width;
  for (std::size_t l = 0; l < geometry.levels; ++l) {
    if (l > 0 && h == 1 && w == 1 && areas.back() == 1) {
      throw ConfigError("mac_count: pyramid stops shrinking at level " + std::to_string(l) +
                        "; at most " + std::to_string(l) + " levels fit this base");
    }
    areas.push_back(static_cast<std::uint64_t>(h) * w);
    h = (h + 2 - 3) / 2 + 1;
    w = (w + 2 - 3) / 2 + 1;
  }
  const std::uint64_t per_position = static_cast<std::uint64_t>(conv.in_channels) *
                                     conv.out_channels * conv.kernel * conv.kernel;
  MacCount m;
  for (std::size_t l = 0; l < areas.size(); ++l) {
    m.ordinary_macs += areas[l] * per_position;
    m.pconv_macs += areas[l] * per_position;  // w_0 on the own level
    if (l + 1 < areas.size()) m.pconv_macs += areas[l + 1] * per_position;
    if (l > 0) m.pconv_macs += areas[l] * per_position;  // stride-2 from finer
  }
  m.ratio = static_cast<double>(m.pconv_macs) / static_cast<double>(m.ordinary_macs);
  return m;
}

}  // namespace agsfcos
