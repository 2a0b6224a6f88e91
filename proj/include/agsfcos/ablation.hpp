#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "agsfcos/coco_eval.hpp"
#include "agsfcos/config.hpp"
#include "agsfcos/trainer.hpp"

namespace agsfcos {

struct Variant {
  std::string name;
  std::string slug;
  bool gc = false;
  TowerKind tower = TowerKind::kConv;
  RegressionLoss regression = RegressionLoss::kGIoU;
};

// Baseline, +CIoU, +CIoU+GC, full model.
std::vector<Variant> ablation_variants();
ModelConfig apply_variant(ModelConfig config, const Variant& variant);

struct AblationRow {
  Variant variant;
  std::size_t steps = 0;
  double final_loss = 0.0;
  bool all_finite = true;
  EvalResult eval;
};

// Trains every variant from the same seed on the same data order. Each run
// writes its logs under out_dir/<slug> when out_dir is non-empty.
std::vector<AblationRow> run_ablation(const ModelConfig& base, std::span<const Sample> samples,
                                      const std::filesystem::path& out_dir,
                                      const std::function<void(const std::string&)>& progress = {});

std::string ablation_markdown(const std::vector<AblationRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace agsfcos
