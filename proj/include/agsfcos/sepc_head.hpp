#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agsfcos/config.hpp"
#include "agsfcos/fpn.hpp"
#include "agsfcos/parameters.hpp"
#include "agsfcos/tensor.hpp"

namespace agsfcos {

/// One pyramid convolution layer, shared by every level:
///
///   y[l] = up2(w_plus1 * x[l+1]) + w_0 * x[l] + (w_minus1 *s2 x[l-1]) + bias
///
/// The coarser-level term is dropped at the top level and the finer-level
/// term at the bottom level. With `cross_level` off only w_0 is present and
/// the layer is an ordinary per-level 3x3 convolution.
struct PConvParams {
  Tensor w_minus1;  // stride-2 kernel applied to the finer level
  Tensor w_0;
  Tensor w_plus1;   // stride-1 kernel applied to the coarser level, then upsampled
  Tensor bias;
  bool cross_level = true;
};

PConvParams make_pconv(ParameterSet& params, const std::string& prefix,
                       std::size_t width, bool cross_level, Rng& rng);

// Throws ConfigError for fewer than two levels.
PyramidLevels pconv_forward(const PyramidLevels& levels, const PConvParams& params);

struct HeadParams {
  std::vector<PConvParams> tower;
  Tensor cls_w, cls_b;  // D -> num_classes
  Tensor ctr_w, ctr_b;  // D -> 1
  Tensor reg_w, reg_b;  // D -> 4
  std::vector<Tensor> level_scales;  // one [1] scalar per level
  std::size_t num_classes = 0;
};

HeadParams make_head(ParameterSet& params, const std::string& prefix,
                     std::size_t width, const HeadConfig& config,
                     std::size_t num_levels, Rng& rng);

struct LevelOutput {
  Tensor cls_logits;  // [N,C,h,w]
  Tensor ctr_logits;  // [N,1,h,w]
  Tensor reg_raw;     // [N,4,h,w]
  Tensor distances;   // exp(s_l * reg_raw), (l,t,r,b) order
};

std::vector<LevelOutput> head_forward(const PyramidLevels& levels,
                                      const HeadParams& params);

struct PyramidGeometry {
  std::size_t base_height = 0;  // finest level extents
  std::size_t base_width = 0;
  std::size_t levels = 3;
};

struct ConvShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
};

struct MacCount {
  std::uint64_t pconv_macs = 0;
  std::uint64_t ordinary_macs = 0;
  double ratio = 0.0;
};

// Exact multiply-accumulate counts of one PConv layer versus one ordinary
// per-level convolution over the same pyramid. Coarser levels follow the
// stride-2, pad-1 size rule; the upsample branch costs a stride-1 conv at
// the coarser resolution. Throws ConfigError for an empty geometry or one
// with more levels than fit before the maps reach 1x1.
MacCount mac_count(const PyramidGeometry& geometry, const ConvShape& conv);

}  // namespace agsfcos
