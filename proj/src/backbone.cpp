#include "agsfcos/backbone.hpp"

#include <numeric>

#include "agsfcos/errors.hpp"
#include "agsfcos/ops.hpp"

namespace agsfcos {

namespace {

Tensor norm_apply(const Tensor& x, const GroupNormParams& n) {
  return group_norm(x, n.groups, n.gamma, n.beta);
}

}  // namespace

std::size_t norm_groups(std::size_t channels) {
  return channels / std::gcd(channels, std::size_t{8});
}

GroupNormParams make_group_norm(ParameterSet& params, const std::string& prefix,
                                std::size_t channels, double gamma_init) {
  GroupNormParams n;
  n.gamma = params.add(prefix + ".gamma", Tensor({channels}, gamma_init));
  n.beta = params.add(prefix + ".beta", Tensor({channels}, 0.0));
  n.groups = norm_groups(channels);
  return n;
}

ResidualBlock::ResidualBlock(ParameterSet& params, const std::string& prefix,
                             std::size_t in_channels, std::size_t out_channels,
                             std::size_t stride, Rng& rng)
    : stride_(stride) {
  conv1_ = params.add(prefix + ".conv1",
                      kaiming_conv_weight({out_channels, in_channels, 3, 3}, rng));
  norm1_ = make_group_norm(params, prefix + ".norm1", out_channels);
  conv2_ = params.add(prefix + ".conv2",
                      kaiming_conv_weight({out_channels, out_channels, 3, 3}, rng));
  norm2_ = make_group_norm(params, prefix + ".norm2", out_channels, 0.0);
  if (stride != 1 || in_channels != out_channels) {
    proj_weight_ = params.add(
        prefix + ".proj", kaiming_conv_weight({out_channels, in_channels, 1, 1}, rng));
    proj_norm_ = make_group_norm(params, prefix + ".proj_norm", out_channels);
  }
}

Tensor ResidualBlock::forward(const Tensor& x) const {
  Tensor y = relu(norm_apply(conv2d(x, conv1_, {}, stride_, 1), norm1_));
  y = norm_apply(conv2d(y, conv2_, {}, 1, 1), norm2_);
  Tensor skip = x;
  if (has_projection()) {
    skip = norm_apply(conv2d(x, proj_weight_, {}, stride_, 0), proj_norm_);
  }
  return relu(add(y, skip));
}

Backbone::Backbone(ParameterSet& params, const BackboneConfig& config, Rng& rng,
                   const std::string& prefix) {
  const std::size_t stem = config.stem_width;
  stem1_ = params.add(prefix + ".stem.conv1", kaiming_conv_weight({stem, 3, 3, 3}, rng));
  stem_norm1_ = make_group_norm(params, prefix + ".stem.norm1", stem);
  stem2_ = params.add(prefix + ".stem.conv2",
                      kaiming_conv_weight({stem, stem, 3, 3}, rng));
  stem_norm2_ = make_group_norm(params, prefix + ".stem.norm2", stem);

  std::size_t in = stem;
  for (std::size_t level = 0; level < config.widths.size(); ++level) {
    const std::size_t out = config.widths[level];
    std::vector<ResidualBlock> blocks;
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      const std::string name = prefix + ".c" + std::to_string(level + 3) +
                               ".block" + std::to_string(b);
      blocks.emplace_back(params, name, b == 0 ? in : out, out, b == 0 ? 2 : 1,
                          rng);
    }
    stages_.push_back(std::move(blocks));
    in = out;
  }
}

Tensor Backbone::stem(const Tensor& image) const {
  Tensor x = relu(norm_apply(conv2d(image, stem1_, {}, 2, 1), stem_norm1_));
  return relu(norm_apply(conv2d(x, stem2_, {}, 2, 1), stem_norm2_));
}

FeatureLevels Backbone::forward(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw DimensionError("backbone: expected [N,3,H,W], got " +
                         shape_str(image.shape()));
  }
  if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0 || image.dim(2) == 0 ||
      image.dim(3) == 0) {
    throw DimensionError("backbone: H and W must be positive multiples of 32, got " +
                         shape_str(image.shape()));
  }
  Tensor x = stem(image);
  std::vector<Tensor> outs;
  for (const auto& blocks : stages_) {
    for (const auto& block : blocks) x = block.forward(x);
    outs.push_back(x);
  }
  return {outs[0], outs[1], outs[2]};
}

}  // namespace agsfcos
