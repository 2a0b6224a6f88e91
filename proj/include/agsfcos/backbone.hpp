#pragma once

#include <string>
#include <vector>

#include "agsfcos/config.hpp"
#include "agsfcos/parameters.hpp"
#include "agsfcos/tensor.hpp"

namespace agsfcos {

// Backbone outputs at strides 8, 16 and 32.
struct FeatureLevels {
  Tensor c3;
  Tensor c4;
  Tensor c5;
};

// Per-channel affine group normalization; each group spans gcd(C, 8)
// channels.
struct GroupNormParams {
  Tensor gamma;
  Tensor beta;
  std::size_t groups = 1;
};

std::size_t norm_groups(std::size_t channels);

GroupNormParams make_group_norm(ParameterSet& params, const std::string& prefix,
                                std::size_t channels, double gamma_init = 1.0);

class ResidualBlock {
 public:
  ResidualBlock(ParameterSet& params, const std::string& prefix,
                std::size_t in_channels, std::size_t out_channels,
                std::size_t stride, Rng& rng);

  Tensor forward(const Tensor& x) const;
  bool has_projection() const { return proj_weight_.defined(); }

 private:
  std::size_t stride_;
  Tensor conv1_;
  GroupNormParams norm1_;
  Tensor conv2_;
  GroupNormParams norm2_;  // gamma starts at zero: the block starts as identity
  Tensor proj_weight_;
  GroupNormParams proj_norm_;
};

// Small residual network: a stride-4 stem followed by one stage per output
// level, each stage opening with a stride-2 block.
class Backbone {
 public:
  Backbone(ParameterSet& params, const BackboneConfig& config, Rng& rng,
           const std::string& prefix = "backbone");

  // image: [N,3,H,W] with H and W multiples of 32.
  FeatureLevels forward(const Tensor& image) const;

  const std::vector<ResidualBlock>& stage(std::size_t level) const {
    return stages_.at(level);
  }
  // Stem output, exposed for identity checks.
  Tensor stem(const Tensor& image) const;

 private:
  Tensor stem1_;
  GroupNormParams stem_norm1_;
  Tensor stem2_;
  GroupNormParams stem_norm2_;
  std::vector<std::vector<ResidualBlock>> stages_;
};

}  // namespace agsfcos
