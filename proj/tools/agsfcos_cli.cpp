#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "agsfcos/ablation.hpp"
#include "agsfcos/checkpoint.hpp"
#include "agsfcos/coco_eval.hpp"
#include "agsfcos/config.hpp"
#include "agsfcos/dataset.hpp"
#include "agsfcos/detector.hpp"
#include "agsfcos/errors.hpp"
#include "agsfcos/gradcheck_suite.hpp"
#include "agsfcos/sepc_head.hpp"
#include "agsfcos/synthetic.hpp"
#include "agsfcos/trainer.hpp"

namespace fs = std::filesystem;
using namespace agsfcos;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

ModelConfig resolve_config(const CommonArgs& args) {
  ModelConfig cfg = args.config_path.empty() ? ModelConfig{} : load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  validate(cfg);
  return cfg;
}

DatasetIndex resolve_dataset(const std::string& data) {
  fs::path p = data;
  if (fs::is_directory(p)) p /= "annotations.json";
  return load_coco_annotations(p);
}

// All computation runs on the calling thread, so every valid cap is met;
// the variable is still parsed so typos surface as usage errors.
void check_thread_cap() {
  const char* env = std::getenv("AGSFCOS_THREADS");
  if (env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) {
      throw UsageError("AGSFCOS_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
  }
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config JSON file (defaults when omitted)");
  cmd->add_option("--seed", args.seed, "Override the config seed");
}

int run_train(const CommonArgs& common, const std::string& data, const std::string& out,
              const std::string& checkpoint, std::size_t steps) {
  const ModelConfig cfg = resolve_config(common);
  const DatasetIndex index = resolve_dataset(data);
  const auto samples = load_samples(index, cfg.data);
  Detector model(cfg);
  TrainOptions options;
  options.out_dir = out;
  if (!checkpoint.empty()) options.resume = fs::path(checkpoint);
  options.stop_at_step = steps;
  const std::size_t total = total_steps(cfg, samples.size());
  options.on_step = [total](const StepLog& s) {
    if (s.step % 10 == 0 || s.step == total) {
      std::printf("step %zu/%zu lr=%.2e cls=%.4f reg=%.4f ctr=%.4f total=%.4f\n", s.step,
                  total, s.lr, s.l_cls, s.l_reg, s.l_ctr, s.total);
      std::fflush(stdout);
    }
  };
  options.on_epoch = [](const EpochLog& e) {
    std::printf("epoch %zu (step %zu): %s\n", e.epoch, e.step, format_eval(e.eval).c_str());
    std::fflush(stdout);
  };
  const TrainResult result = train(model, samples, options);
  std::printf("finished at step %zu; checkpoint written to %s\n", result.state.step,
              (fs::path(out) / "checkpoint").string().c_str());
  return 0;
}

int run_eval(const CommonArgs& common, const std::string& data, const std::string& checkpoint,
             const std::string& detections, const std::string& out) {
  const ModelConfig cfg = resolve_config(common);
  const DatasetIndex index = resolve_dataset(data);
  if (index.images.empty()) throw InputError("eval: dataset has no images");

  std::map<std::int64_t, std::vector<Detection>> dets;
  if (!detections.empty()) {
    dets = load_coco_results(detections, index);
  } else {
    if (checkpoint.empty()) throw UsageError("eval: pass --checkpoint or --detections");
    Detector model(cfg);
    load_checkpoint(checkpoint, model.parameters());
    dets = evaluate(model, load_samples(index, cfg.data), cfg.data.batch_size).detections;
  }
  std::vector<EvalImage> images;
  const auto gts = index.gts_per_image();
  for (std::size_t i = 0; i < index.images.size(); ++i) {
    const auto it = dets.find(index.images[i].id);
    images.push_back({index.images[i].id, gts[i],
                      it == dets.end() ? std::vector<Detection>{} : it->second});
  }
  CocoEvalParams params;
  params.max_detections = cfg.postprocess.max_detections;
  const EvalResult result = coco_eval(images, params);
  std::cout << format_eval(result) << "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    save_coco_results(fs::path(out) / "detections.json", dets, index);
    std::ofstream(fs::path(out) / "eval.txt") << format_eval(result) << "\n";
  }
  return 0;
}

int run_gradcheck(const CommonArgs& common) {
  const ModelConfig cfg = resolve_config(common);
  const GradcheckReport report = run_gradcheck_suite(cfg, cfg.seed);
  if (report.skipped) {
    std::cerr << format_report(report);
    return 0;
  }
  std::cout << format_report(report);
  return report.passed() ? 0 : 1;
}

int run_flops(const CommonArgs& common, std::size_t levels) {
  const ModelConfig cfg = resolve_config(common);
  const std::size_t base = cfg.data.image_size / cfg.assigner.strides.front();
  const std::size_t width = cfg.fpn.width;
  const MacCount m = mac_count({base, base, levels == 0 ? cfg.assigner.strides.size() : levels},
                               {width, width, 3});
  std::printf("geometry: %zux%zu finest level, %zu levels, %zu->%zu channels, 3x3 kernels\n",
              base, base, levels == 0 ? cfg.assigner.strides.size() : levels, width, width);
  std::printf("ordinary_macs=%llu\npconv_macs=%llu\nratio=%.6f\n",
              static_cast<unsigned long long>(m.ordinary_macs),
              static_cast<unsigned long long>(m.pconv_macs), m.ratio);
  return 0;
}

int run_ablate(const CommonArgs& common, const std::string& data, const std::string& out) {
  const ModelConfig cfg = resolve_config(common);
  const DatasetIndex index = resolve_dataset(data);
  const auto samples = load_samples(index, cfg.data);
  const auto rows = run_ablation(cfg, samples, out, [](const std::string& msg) {
    std::printf("%s\n", msg.c_str());
    std::fflush(stdout);
  });
  const std::string md = ablation_markdown(rows);
  std::cout << md;
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "ablation.md") << md;
    std::ofstream(fs::path(out) / "ablation.csv") << ablation_csv(rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AGSFCOS anchor-free detector: training, evaluation and diagnostics"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string data, out, checkpoint, detections;
  std::size_t steps = 0;
  std::size_t levels = 0;
  SynthSpec synth;

  auto* train = app.add_subcommand("train", "Train a detector and log metrics");
  add_common(train, common);
  train->add_option("--data", data, "Dataset directory or annotations.json")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--checkpoint", checkpoint, "Resume from this checkpoint directory");
  train->add_option("--steps", steps, "Stop after this many total steps");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a results file");
  add_common(eval, common);
  eval->add_option("--data", data, "Dataset directory or annotations.json")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  eval->add_option("--detections", detections, "COCO results JSON to score instead");
  eval->add_option("--out", out, "Write detections.json and eval.txt here");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gradcheck, common);

  auto* flops = app.add_subcommand("flops", "PConv versus ordinary convolution cost");
  add_common(flops, common);
  flops->add_option("--levels", levels, "Pyramid levels (default: config)");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic shapes dataset");
  synth_cmd->add_option("--out", out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--count", synth.image_count, "Number of images");
  synth_cmd->add_option("--size", synth.image_size, "Image side length");
  synth_cmd->add_option("--min-objects", synth.min_objects, "Fewest objects per image");
  synth_cmd->add_option("--max-objects", synth.max_objects, "Most objects per image");
  synth_cmd->add_option("--min-size", synth.min_size, "Smallest object side");
  synth_cmd->add_option("--max-size", synth.max_size, "Largest object side");
  synth_cmd->add_option("--noise", synth.noise, "Background noise amplitude");

  auto* ablate = app.add_subcommand("ablate", "Train the four ablation variants");
  add_common(ablate, common);
  ablate->add_option("--data", data, "Dataset directory or annotations.json")->required();
  ablate->add_option("--out", out, "Output directory for logs and tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    check_thread_cap();
    if (*train) return run_train(common, data, out, checkpoint, steps);
    if (*eval) return run_eval(common, data, checkpoint, detections, out);
    if (*gradcheck) return run_gradcheck(common);
    if (*flops) return run_flops(common, levels);
    if (*ablate) return run_ablate(common, data, out);
    if (*synth_cmd) {
      const DatasetIndex index = generate_synthetic(synth, out);
      std::printf("wrote %zu images and %zu boxes to %s\n", index.images.size(),
                  index.annotations.size(), out.c_str());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
