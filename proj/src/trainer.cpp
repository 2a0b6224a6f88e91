#include "agsfcos/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "agsfcos/errors.hpp"
#include "agsfcos/image_io.hpp"
#include "agsfcos/losses.hpp"
#include "agsfcos/serialize.hpp"
#include "agsfcos/splitmix.hpp"
#include "agsfcos/targets.hpp"

namespace agsfcos {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool flip_for(std::uint64_t seed, std::size_t step, std::size_t slot) {
  return (mix_seed(mix_seed(seed, step), slot + 0x5f) & 1ULL) != 0;
}

GroundTruthBox flipped(const GroundTruthBox& g, double width) {
  return {{width - g.box.x2, g.box.y1, width - g.box.x1, g.box.y2}, g.class_id};
}

[[noreturn]] void dump_and_throw(const std::filesystem::path& dump_dir, std::size_t step,
                                 const Tensor& images,
                                 const std::vector<std::vector<GroundTruthBox>>& gts,
                                 std::span<const Sample> samples,
                                 std::span<const std::size_t> batch,
                                 const std::string& what) {
  const std::filesystem::path dir =
      (dump_dir.empty() ? std::filesystem::temp_directory_path() : dump_dir) /
      ("nonfinite_step_" + std::to_string(step));
  std::string where = dir.string();
  try {
    std::filesystem::create_directories(dir);
    save_tensor(dir / "images.ten", images);
    nlohmann::json doc = nlohmann::json::array();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      nlohmann::json boxes = nlohmann::json::array();
      for (const auto& g : gts[i]) {
        boxes.push_back({{"class_id", g.class_id},
                         {"box", {g.box.x1, g.box.y1, g.box.x2, g.box.y2}}});
      }
      doc.push_back({{"image_id", samples[batch[i]].image_id}, {"gts", boxes}});
    }
    std::ofstream(dir / "batch.json") << doc.dump(1) << "\n";
  } catch (const std::exception& e) {
    where += " (dump failed: " + std::string(e.what()) + ")";
  }
  throw NumericError("non-finite value at step " + std::to_string(step) + ": " + what +
                     "; batch dumped to " + where);
}

class CsvAppender {
 public:
  CsvAppender(const std::filesystem::path& path, const std::string& header, bool append) {
    if (path.empty()) return;
    const bool exists = std::filesystem::exists(path);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw FormatError("cannot write " + path.string());
    if (!append || !exists) out_ << header << "\n";
  }
  void row(const std::string& line) {
    if (out_.is_open()) out_ << line << "\n" << std::flush;
  }

 private:
  std::ofstream out_;
};

}  // namespace

std::vector<Sample> load_samples(const DatasetIndex& index, const DataConfig& data) {
  if (index.images.empty()) throw InputError("dataset has no images");
  const auto gts = index.gts_per_image();
  std::vector<Sample> out;
  for (std::size_t i = 0; i < index.images.size(); ++i) {
    const ImageRecord& rec = index.images[i];
    Tensor image = load_image(index.root / rec.file, data.mean, data.std);
    if (image.dim(1) != rec.height || image.dim(2) != rec.width) {
      throw IntegrityError(rec.file + ": stored extents differ from the annotation record");
    }
    if (rec.height % 32 != 0 || rec.width % 32 != 0) {
      throw InputError(rec.file + ": image extents must be multiples of 32");
    }
    out.push_back({rec.id, std::move(image), gts[i]});
  }
  return out;
}

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size) {
  return (samples + batch_size - 1) / batch_size;
}

std::size_t total_steps(const ModelConfig& config, std::size_t samples) {
  const std::size_t scheduled =
      config.optimizer.epochs * steps_per_epoch(samples, config.data.batch_size);
  return config.optimizer.max_steps > 0 ? std::min(scheduled, config.optimizer.max_steps)
                                        : scheduled;
}

double learning_rate(const OptimizerConfig& config, std::size_t epoch) {
  double lr = config.lr;
  for (std::size_t boundary : config.decay_epochs) {
    if (epoch >= boundary) lr *= config.decay_factor;
  }
  return lr;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix rng(mix_seed(seed, epoch + 1));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.range(0, i - 1)]);
  return order;
}

StepLog sgd_step(Detector& model, std::span<const Sample> samples,
                 std::span<const std::size_t> batch, double lr, TrainState& state,
                 const std::filesystem::path& dump_dir) {
  const ModelConfig& cfg = model.config();
  ParameterSet& params = model.parameters();
  const std::size_t step = state.step + 1;

  std::vector<Tensor> images;
  std::vector<std::vector<GroundTruthBox>> gts;
  for (std::size_t slot = 0; slot < batch.size(); ++slot) {
    const Sample& s = samples[batch[slot]];
    if (cfg.data.hflip && flip_for(state.seed, step, slot)) {
      images.push_back(hflip_image(s.image));
      std::vector<GroundTruthBox> g;
      for (const auto& b : s.gts) g.push_back(flipped(b, static_cast<double>(s.image.dim(2))));
      gts.push_back(std::move(g));
    } else {
      images.push_back(s.image);
      gts.push_back(s.gts);
    }
  }
  const Tensor input = stack_images(images);
  std::vector<TargetMap> targets;
  for (const auto& g : gts) {
    targets.push_back(assign_targets(g, input.dim(2), input.dim(3), cfg.assigner));
  }

  params.zero_grad();
  StepLog log;
  log.step = step;
  log.lr = lr;
  try {
    PrecisionScope precision(cfg.precision);
    Tape tape;
    const auto outputs = model.forward(input);
    const LossBreakdown loss = total_loss(outputs, targets, cfg.loss);
    log.l_cls = loss.cls.item();
    log.l_reg = loss.reg.item();
    log.l_ctr = loss.ctr.item();
    log.total = loss.total.item();
    tape.backward(loss.total);
  } catch (const NumericError& e) {
    dump_and_throw(dump_dir, step, input, gts, samples, batch, e.what());
  }

  double sq = 0.0;
  for (const auto& p : params.items()) {
    for (double g : p.value.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    dump_and_throw(dump_dir, step, input, gts, samples, batch, "gradient norm");
  }
  const double clip = cfg.optimizer.clip_norm;
  const double coef = (clip > 0.0 && norm > clip) ? clip / (norm + 1e-6) : 1.0;

  const double m = cfg.optimizer.momentum;
  const double wd = cfg.optimizer.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.items()[i].value;
    auto values = p.mutable_values();
    auto buf = state.momentum[i].mutable_values();
    auto grad = p.grad();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = (grad.empty() ? 0.0 : grad[k] * coef) + wd * values[k];
      buf[k] = m * buf[k] + g;
      values[k] -= lr * buf[k];
    }
  }
  state.step = step;
  return log;
}

TrainResult train(Detector& model, std::span<const Sample> samples,
                  const TrainOptions& options) {
  if (samples.empty()) throw InputError("train: no samples");
  const ModelConfig& cfg = model.config();
  TrainResult result;
  result.state = options.resume ? load_checkpoint(*options.resume, model.parameters())
                                : fresh_train_state(model.parameters(), cfg.seed);
  TrainState& state = result.state;

  const std::size_t spe = steps_per_epoch(samples.size(), cfg.data.batch_size);
  const std::size_t total = total_steps(cfg, samples.size());
  const std::size_t end =
      options.stop_at_step > 0 ? std::min(options.stop_at_step, total) : total;

  const bool files = !options.out_dir.empty();
  if (files) std::filesystem::create_directories(options.out_dir);
  const bool append = options.resume.has_value();
  CsvAppender metrics(files ? options.out_dir / "metrics.csv" : std::filesystem::path(),
                      "step,l_cls,l_reg,l_ctr,total", append);
  CsvAppender epoch_csv(files ? options.out_dir / "epoch_ap.csv" : std::filesystem::path(),
                        "epoch,step,ap,ap50,ap75,ap_s,ap_m,ap_l", append);

  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  while (state.step < end) {
    const std::size_t epoch = state.step / spe;
    const std::size_t pos = state.step % spe;
    if (epoch != order_epoch) {
      order = epoch_order(state.seed, epoch, samples.size());
      order_epoch = epoch;
    }
    const std::size_t lo = pos * cfg.data.batch_size;
    const std::size_t hi = std::min(samples.size(), lo + cfg.data.batch_size);
    const std::span<const std::size_t> batch(order.data() + lo, hi - lo);

    const StepLog log = sgd_step(model, samples, batch, learning_rate(cfg.optimizer, epoch),
                                 state, options.out_dir);
    state.epoch = state.step / spe;
    result.steps.push_back(log);
    metrics.row(std::to_string(log.step) + "," + fmt(log.l_cls) + "," + fmt(log.l_reg) +
                "," + fmt(log.l_ctr) + "," + fmt(log.total));
    if (options.on_step) options.on_step(log);

    const std::size_t interval = cfg.eval_interval_epochs;
    const bool epoch_done = state.step % spe == 0 || state.step == total;
    const std::size_t completed = (state.step + spe - 1) / spe;
    if (epoch_done && interval > 0 && (completed % interval == 0 || state.step == total)) {
      EpochLog e{completed, state.step, evaluate(model, samples, cfg.data.batch_size).result};
      state.best_ap50 = std::max(state.best_ap50, e.eval.ap50);
      result.epochs.push_back(e);
      const EvalResult& r = e.eval;
      epoch_csv.row(std::to_string(e.epoch) + "," + std::to_string(e.step) + "," +
                    fmt(r.ap) + "," + fmt(r.ap50) + "," + fmt(r.ap75) + "," + fmt(r.ap_s) +
                    "," + fmt(r.ap_m) + "," + fmt(r.ap_l));
      if (options.on_epoch) options.on_epoch(e);
    }
    if (files && options.checkpoint_every > 0 && state.step % options.checkpoint_every == 0 &&
        state.step < end) {
      save_checkpoint(options.out_dir / ("checkpoint_step_" + std::to_string(state.step)),
                      model.parameters(), state);
    }
  }
  if (files) {
    save_checkpoint(options.out_dir / "checkpoint", model.parameters(), state);
    save_config(options.out_dir / "config.json", cfg);
  }
  return result;
}

EvalOutput evaluate(const Detector& model, std::span<const Sample> samples,
                    std::size_t batch_size) {
  if (samples.empty()) throw InputError("evaluate: no samples");
  PrecisionScope precision(model.config().precision);
  EvalOutput out;
  std::vector<EvalImage> images;
  for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
    const std::size_t hi = std::min(samples.size(), lo + batch_size);
    std::vector<Tensor> batch;
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(samples[i].image);
    const auto dets = model.detect(stack_images(batch));
    for (std::size_t i = lo; i < hi; ++i) {
      out.detections[samples[i].image_id] = dets[i - lo];
      images.push_back({samples[i].image_id, samples[i].gts, dets[i - lo]});
    }
  }
  CocoEvalParams params;
  params.max_detections = model.config().postprocess.max_detections;
  out.result = coco_eval(images, params);
  return out;
}

}  // namespace agsfcos
