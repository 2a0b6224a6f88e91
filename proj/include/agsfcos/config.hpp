#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "agsfcos/tensor.hpp"

namespace agsfcos {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct BackboneConfig {
  std::size_t stem_width = 16;
  std::array<std::size_t, 3> widths = {32, 64, 128};  // C3, C4, C5
  std::size_t blocks_per_stage = 2;
};

struct GcConfig {
  bool enabled = true;
  std::size_t ratio = 4;
};

struct FpnConfig {
  std::size_t width = 64;
  bool smooth = true;
};

enum class TowerKind { kPConv, kConv };

struct HeadConfig {
  std::size_t depth = 4;
  TowerKind tower = TowerKind::kPConv;
  std::size_t num_classes = 3;
  double prior_prob = 0.01;
  double initial_distance = 32.0;  // box distances at init, in pixels
};

enum class RegressionLoss { kIoU, kGIoU, kCIoU };

struct LossConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  RegressionLoss regression = RegressionLoss::kCIoU;
};

// Point-to-level assignment. A location is positive on level k when its
// largest side distance lies in (ranges[k].first, ranges[k].second].
struct AssignerConfig {
  std::vector<std::size_t> strides = {8, 16, 32};
  std::vector<std::pair<double, double>> ranges = {
      {0.0, 64.0}, {64.0, 128.0}, {128.0, kUnbounded}};
};

struct PostprocessConfig {
  double score_threshold = 0.05;
  double nms_iou = 0.6;
  std::size_t pre_nms_top_k = 100;
  std::size_t max_detections = 100;
};

struct OptimizerConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::size_t> decay_epochs = {8, 11};
  double decay_factor = 0.1;
  std::size_t epochs = 12;
  double clip_norm = 10.0;  // <= 0 disables clipping
  std::size_t max_steps = 0;  // 0: run all epochs
};

struct DataConfig {
  std::size_t batch_size = 2;
  std::size_t image_size = 256;
  std::array<double, 3> mean = {0.5, 0.5, 0.5};
  std::array<double, 3> std = {0.25, 0.25, 0.25};
  bool hflip = false;
};

struct ModelConfig {
  BackboneConfig backbone;
  GcConfig gc;
  FpnConfig fpn;
  HeadConfig head;
  LossConfig loss;
  AssignerConfig assigner;
  PostprocessConfig postprocess;
  OptimizerConfig optimizer;
  DataConfig data;
  Precision precision = Precision::kF64;
  std::uint64_t seed = 0;
  std::size_t eval_interval_epochs = 1;  // 0 disables per-epoch eval
};

// Throws ConfigError describing the first violated constraint.
void validate(const ModelConfig& config);

// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ModelConfig& config);

std::string to_string(TowerKind kind);
std::string to_string(RegressionLoss kind);

}  // namespace agsfcos
