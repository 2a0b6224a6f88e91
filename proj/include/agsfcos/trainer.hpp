#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "agsfcos/box.hpp"
#include "agsfcos/checkpoint.hpp"
#include "agsfcos/coco_eval.hpp"
#include "agsfcos/dataset.hpp"
#include "agsfcos/detector.hpp"

namespace agsfcos {

struct Sample {
  std::int64_t image_id = 0;
  Tensor image;  // [3,H,W], normalized
  std::vector<GroundTruthBox> gts;
};

// Loads every image of the index. Throws InputError for an empty index or
// images whose extents are not multiples of 32.
std::vector<Sample> load_samples(const DatasetIndex& index, const DataConfig& data);

struct StepLog {
  std::size_t step = 0;  // 1-based
  double l_cls = 0.0;
  double l_reg = 0.0;
  double l_ctr = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based, completed epochs
  std::size_t step = 0;
  EvalResult eval;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::optional<std::filesystem::path> resume;
  std::size_t stop_at_step = 0;  // 0: run the whole schedule
  std::size_t checkpoint_every = 0;  // in steps; the final checkpoint is always written
  std::function<void(const StepLog&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  TrainState state;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
};

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size);
std::size_t total_steps(const ModelConfig& config, std::size_t samples);
double learning_rate(const OptimizerConfig& config, std::size_t epoch);
// Permutation of [0, n) used for a given epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

// One SGD step on the given batch. Non-finite values abort with a dump of
// the batch under `dump_dir` and a NumericError.
StepLog sgd_step(Detector& model, std::span<const Sample> samples,
                 std::span<const std::size_t> batch, double lr, TrainState& state,
                 const std::filesystem::path& dump_dir);

// Writes metrics.csv (step,l_cls,l_reg,l_ctr,total), epoch_ap.csv and
// checkpoint/ under out_dir when one is given.
TrainResult train(Detector& model, std::span<const Sample> samples,
                  const TrainOptions& options);

struct EvalOutput {
  EvalResult result;
  std::map<std::int64_t, std::vector<Detection>> detections;
};

EvalOutput evaluate(const Detector& model, std::span<const Sample> samples,
                    std::size_t batch_size);

}  // namespace agsfcos
