#include "agsfcos/detector.hpp"

#include "agsfcos/postprocess.hpp"

namespace agsfcos {

Detector::Detector(const ModelConfig& config) : config_(config) {
  validate(config_);
  Rng rng(config_.seed);
  backbone_.emplace(params_, config_.backbone, rng);
  if (config_.gc.enabled) {
    static const char* kNames[] = {"gc.c3", "gc.c4", "gc.c5"};
    for (std::size_t l = 0; l < 3; ++l) {
      gc_.push_back(make_gc_block(params_, kNames[l], config_.backbone.widths[l],
                                  config_.gc.ratio, rng));
    }
  }
  fpn_ = make_fpn(params_, "fpn", config_.backbone.widths, config_.fpn.width,
                  config_.fpn.smooth, rng);
  head_ = make_head(params_, "head", config_.fpn.width, config_.head,
                    config_.assigner.strides.size(), rng);
}

std::vector<LevelOutput> Detector::forward(const Tensor& images) const {
  FeatureLevels features = backbone_->forward(images);
  if (!gc_.empty()) {
    features.c3 = gc_forward(features.c3, gc_[0]);
    features.c4 = gc_forward(features.c4, gc_[1]);
    features.c5 = gc_forward(features.c5, gc_[2]);
  }
  return head_forward(fpn_forward(features, fpn_), head_);
}

std::vector<std::vector<Detection>> Detector::detect(const Tensor& images) const {
  NoGradScope no_grad;
  const auto outputs = forward(images);
  std::vector<std::vector<Detection>> result;
  for (std::size_t n = 0; n < images.dim(0); ++n) {
    result.push_back(postprocess(outputs, n, config_.assigner.strides, images.dim(2),
                                 images.dim(3), config_.postprocess));
  }
  return result;
}

}  // namespace agsfcos
