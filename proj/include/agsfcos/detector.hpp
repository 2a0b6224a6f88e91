#pragma once

#include <optional>
#include <vector>

#include "agsfcos/backbone.hpp"
#include "agsfcos/box.hpp"
#include "agsfcos/config.hpp"
#include "agsfcos/fpn.hpp"
#include "agsfcos/gc_block.hpp"
#include "agsfcos/parameters.hpp"
#include "agsfcos/sepc_head.hpp"

namespace agsfcos {

// Backbone -> optional GC block per level -> FPN -> shared head.
// Parameters are created in a fixed order from an RNG seeded by
// config.seed, so equal configs give bit-identical weights.
class Detector {
 public:
  explicit Detector(const ModelConfig& config);
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;
  Detector(Detector&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  std::vector<LevelOutput> forward(const Tensor& images) const;

  // Inference without gradient recording; one detection list per image.
  std::vector<std::vector<Detection>> detect(const Tensor& images) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
  std::optional<Backbone> backbone_;
  std::vector<GcBlockParams> gc_;
  FpnParams fpn_;
  HeadParams head_;
};

}  // namespace agsfcos
