// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. `--only a,b` restricts the run to the named criteria and
// `--work DIR` sets the scratch directory.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "agsfcos/ablation.hpp"
#include "agsfcos/backbone.hpp"
#include "agsfcos/coco_eval.hpp"
#include "agsfcos/config.hpp"
#include "agsfcos/detector.hpp"
#include "agsfcos/fpn.hpp"
#include "agsfcos/gc_block.hpp"
#include "agsfcos/gradcheck_suite.hpp"
#include "agsfcos/losses.hpp"
#include "agsfcos/ops.hpp"
#include "agsfcos/sepc_head.hpp"
#include "agsfcos/synthetic.hpp"
#include "agsfcos/targets.hpp"
#include "agsfcos/trainer.hpp"
#include "../oracles/coco_bruteforce.hpp"
#include "../oracles/loss_reference.hpp"

namespace fs = std::filesystem;
using namespace agsfcos;

namespace {

// Tolerances and budgets, all fixed here.
constexpr double kGradTol = 1e-5;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kRatioTarget = 1.476;
constexpr double kRatioTol = 0.01;
constexpr double kRatioCap = 1.5;
constexpr double kLossExampleTol = 1e-9;
constexpr double kCenternessTol = 1e-12;
constexpr double kReferenceTol = 1e-10;
constexpr double kGcTol = 1e-12;
constexpr double kParityTol = 1e-9;
constexpr int kParityInstances = 50;
constexpr std::size_t kParityMaxBoxes = 5;
constexpr double kOverfitAp50 = 0.90;
constexpr std::size_t kOverfitMaxSteps = 800;
constexpr double kOverfitBudgetSeconds = 1200.0;
constexpr std::size_t kSmoothWindow = 50;
constexpr std::size_t kAblationSteps = 20;
constexpr std::size_t kReproSteps = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Context {
  fs::path work;
  fs::path cli;
  fs::path overfit_config;

  // 20 synthetic 256x256 images over 3 classes, generated once.
  const fs::path& dataset() {
    if (data_.empty()) {
      data_ = work / "synthetic";
      SynthSpec spec;
      spec.seed = 7;
      generate_synthetic(spec, data_);
    }
    return data_;
  }

  std::vector<Sample> samples(const ModelConfig& cfg) {
    return load_samples(load_coco_annotations(dataset() / "annotations.json"), cfg.data);
  }

 private:
  fs::path data_;
};

Outcome gradient_correctness(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckReport r = run_gradcheck_suite(ModelConfig{}, 0);
  const double secs = seconds_since(t0);
  if (r.skipped) return {false, "suite skipped: " + r.warning};
  double worst = 0.0;
  std::string worst_name, names;
  bool ok = true;
  for (const auto& c : r.checks) {
    names += (names.empty() ? "" : ",") + c.module;
    ok = ok && c.max_rel_error <= kGradTol;
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_name = c.module;
    }
  }
  const std::set<std::string> required = {"backbone", "gc",         "fpn", "pconv_stack",
                                          "focal",    "centerness", "ciou"};
  std::set<std::string> seen;
  for (const auto& c : r.checks) seen.insert(c.module);
  ok = ok && seen == required && secs < kGradBudgetSeconds;
  return {ok, "modules " + names + "; worst " + worst_name + fmt(" %.2e", worst) +
                  fmt(" <= 1e-5; %.1f s < 120 s", secs)};
}

Outcome pconv_cost(Context& ctx) {
  auto run = [&](std::size_t levels, std::string& out) {
    const std::string cmd = "\"" + ctx.cli.string() + "\" flops --levels " +
                            std::to_string(levels) + " 2>&1";
    out.clear();
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) return -1;
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) out += buf;
    return pclose(pipe);
  };
  auto ratio_of = [](const std::string& out) {
    const auto at = out.find("ratio=");
    return at == std::string::npos ? std::nan("") : std::stod(out.substr(at + 6));
  };
  std::string out;
  if (run(3, out) != 0) return {false, "flops --levels 3 failed: " + out};
  const double r3 = ratio_of(out);
  bool ok = std::abs(r3 - kRatioTarget) <= kRatioTol;
  std::string detail = fmt("3-level ratio %.6f (target 1.476 +- 0.01)", r3);
  double worst = 0.0;
  std::size_t counted = 0;
  for (std::size_t levels = 1;; ++levels) {
    if (run(levels, out) != 0) break;  // the pyramid no longer shrinks
    const double r = ratio_of(out);
    worst = std::max(worst, r);
    ok = ok && r <= kRatioCap && (levels > 1 || r == 1.0);
    ++counted;
  }
  ok = ok && counted >= 3;
  return {ok, detail + fmt("; max over %.0f valid level counts", double(counted)) +
                  fmt(" %.6f <= 1.5", worst)};
}

Outcome loss_oracles(Context&) {
  using oracle::RefBox;
  bool ok = true;
  std::ostringstream d;
  const double ciou = ciou_loss({0, 0, 2, 2}, {2, 2, 4, 4});
  ok = ok && std::abs(ciou - 1.25) <= kLossExampleTol;
  const double same = ciou_loss({3, 1, 9, 5}, {3, 1, 9, 5});
  ok = ok && same == 0.0;
  const Tensor p = Tensor({1}, 0.5);
  const double target[] = {1.0};
  const double focal = focal_loss(p, target, 0.25, 2.0, 1).item();
  ok = ok && std::abs(focal - 0.0625 * std::log(2.0)) <= kLossExampleTol;
  const double ctr = centerness(/*l=*/1, /*t=*/1, /*r=*/3, /*b=*/3);
  ok = ok && std::abs(ctr - 1.0 / 3.0) <= kCenternessTol;
  d << fmt("ciou %.12f", ciou) << fmt(", ciou(b,b) %.1e", same) << fmt(", focal %.12f", focal)
    << fmt(", centerness %.15f", ctr);

  // Each loss against its straight-line reimplementation on random inputs.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pos(-20, 20), ext(0.5, 30), prob(0.001, 0.999),
      dist(0.1, 50), logit(-6, 6), unit(0, 1);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  track(ciou, oracle::ref_ciou({0, 0, 2, 2}, {2, 2, 4, 4}));
  track(focal, oracle::ref_focal_term(0.5, 1, 0.25, 2.0));
  track(ctr, oracle::ref_centerness(1, 1, 3, 3));
  for (int i = 0; i < 500; ++i) {
    const double x = pos(rng), y = pos(rng), u = pos(rng), v = pos(rng);
    const Box a{x, y, x + ext(rng), y + ext(rng)}, b{u, v, u + ext(rng), v + ext(rng)};
    track(ciou_loss(a, b), oracle::ref_ciou({a.x1, a.y1, a.x2, a.y2}, {b.x1, b.y1, b.x2, b.y2}));
    const double pr = prob(rng);
    const int y1 = unit(rng) < 0.5 ? 1 : 0;
    const double t1[] = {double(y1)};
    const double g = 0.5 + 2.0 * unit(rng);
    track(focal_loss(Tensor({1}, pr), t1, 0.25, g, 1).item(),
          oracle::ref_focal_term(pr, y1, 0.25, g));
    const double l = dist(rng), t = dist(rng), r = dist(rng), bb = dist(rng);
    track(centerness(l, t, r, bb), oracle::ref_centerness(l, t, r, bb));
    const double z = logit(rng), tz[] = {unit(rng)};
    track(centerness_bce(Tensor({1}, z), tz).value.item(), oracle::ref_bce(z, tz[0]));
  }
  ok = ok && worst <= kReferenceTol;
  d << fmt("; max deviation from reference %.2e <= 1e-10", worst);
  return {ok, d.str()};
}

Outcome gc_block(Context&) {
  ParameterSet params;
  Rng rng(4);
  GcBlockParams gc = make_gc_block(params, "gc", 64, 4, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor x({2, 64, 16, 16});
  for (double& v : x.mutable_values()) v = n(rng);
  const Tensor z0 = gc_forward(x, gc);
  double identity = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) identity = std::max(identity, std::abs(z0[i] - x[i]));

  for (auto& p : params.items()) {
    for (double& v : p.value.mutable_values()) v += 0.5 * n(rng);
  }
  GcTrace trace;
  const Tensor z = gc_forward(x, gc, &trace);
  const std::size_t area = 256;
  double sum_err = 0.0, uniform_err = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < area; ++j) s += trace.attention[b * area + j];
    sum_err = std::max(sum_err, std::abs(s - 1.0));
    for (std::size_t c = 0; c < 64; ++c) {
      const std::size_t base = (b * 64 + c) * area;
      for (std::size_t j = 0; j < area; ++j) {
        const double delta = z[base + j] - x[base + j];
        uniform_err = std::max(uniform_err, std::abs(delta - trace.update[b * 64 + c]));
      }
    }
  }
  const bool ok = identity == 0.0 && sum_err <= kGcTol && uniform_err <= kGcTol;
  return {ok, fmt("identity max diff %.1e (== 0)", identity) +
                  fmt("; attention sum error %.2e <= 1e-12", sum_err) +
                  fmt("; update non-uniformity %.2e <= 1e-12", uniform_err)};
}

Outcome fpn_shape_law(Context&) {
  const ModelConfig cfg;
  ParameterSet params;
  Rng rng(2);
  Backbone net(params, cfg.backbone, rng);
  const FpnParams fpn = make_fpn(params, "fpn", cfg.backbone.widths, cfg.fpn.width, true, rng);
  Tensor img({1, 3, 64, 64});
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : img.mutable_values()) v = n(rng);
  const PyramidLevels p = fpn_forward(net.forward(img), fpn);
  const bool ok = p.size() == 3 && p[0].dim(2) == 8 && p[0].dim(3) == 8 && p[1].dim(2) == 4 &&
                  p[1].dim(3) == 4 && p[2].dim(2) == 2 && p[2].dim(3) == 2 &&
                  p[1].dim(2) == 2 * p[2].dim(2) && p[1].dim(3) == 2 * p[2].dim(3);
  return {ok, "P3 " + shape_str(p[0].shape()) + ", P4 " + shape_str(p[1].shape()) + ", P5 " +
                  shape_str(p[2].shape())};
}

Outcome evaluator_parity(Context&) {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> pos(0, 48), ext(2, 40), jitter(-5, 5), sc(0, 1);
  double worst_ap = 0.0, worst_ap50 = 0.0;
  for (int inst = 0; inst < kParityInstances; ++inst) {
    const std::size_t n_gt = 1 + rng() % kParityMaxBoxes;
    const std::size_t n_det = rng() % (kParityMaxBoxes + 1);
    const std::size_t n_img = 1 + rng() % 2;
    std::vector<EvalImage> ims(n_img);
    std::vector<oracle::BfImage> bf(n_img);
    for (std::size_t i = 0; i < n_img; ++i) ims[i].image_id = std::int64_t(i + 1);
    for (std::size_t k = 0; k < n_gt; ++k) {
      const std::size_t i = rng() % n_img;
      const double x = pos(rng), y = pos(rng);
      const Box b{x, y, x + ext(rng), y + ext(rng)};
      const int cls = int(rng() % 2);
      ims[i].gts.push_back({b, std::size_t(cls)});
      bf[i].gts.push_back({{b.x1, b.y1, b.x2, b.y2}, cls, 0.0});
    }
    for (std::size_t k = 0; k < n_det; ++k) {
      const std::size_t i = rng() % n_img;
      Box b;
      if (!ims[i].gts.empty() && rng() % 4 != 0) {
        const Box& g = ims[i].gts[rng() % ims[i].gts.size()].box;
        b = {g.x1 + jitter(rng), g.y1 + jitter(rng), g.x2 + jitter(rng), g.y2 + jitter(rng)};
        if (b.degenerate()) b = g;
      } else {
        const double x = pos(rng), y = pos(rng);
        b = {x, y, x + ext(rng), y + ext(rng)};
      }
      const int cls = int(rng() % 2);
      const double s = sc(rng);
      ims[i].dets.push_back({b, std::size_t(cls), s});
      bf[i].dets.push_back({{b.x1, b.y1, b.x2, b.y2}, cls, s});
    }
    const EvalResult r = coco_eval(ims);
    const oracle::BfResult o = oracle::bf_coco(bf);
    worst_ap = std::max(worst_ap, std::abs(r.ap - o.ap));
    worst_ap50 = std::max(worst_ap50, std::abs(r.ap50 - o.ap50));
  }
  const bool ok = worst_ap <= kParityTol && worst_ap50 <= kParityTol;
  return {ok, fmt("%.0f instances", kParityInstances) + fmt("; max |dAP| %.2e", worst_ap) +
                  fmt(", max |dAP50| %.2e (<= 1e-9)", worst_ap50)};
}

// Means of consecutive non-overlapping windows of the per-step total loss.
std::vector<double> window_means(const std::vector<StepLog>& steps, std::size_t window) {
  std::vector<double> out;
  for (std::size_t start = 0; start + window <= steps.size(); start += window) {
    double s = 0.0;
    for (std::size_t i = start; i < start + window; ++i) s += steps[i].total;
    out.push_back(s / double(window));
  }
  return out;
}

Outcome end_to_end_overfit(Context& ctx) {
  const ModelConfig cfg = load_config(ctx.overfit_config);
  const auto samples = ctx.samples(cfg);
  const bool full_model = cfg.gc.enabled && cfg.head.tower == TowerKind::kPConv &&
                          cfg.head.depth == 4 && cfg.loss.regression == RegressionLoss::kCIoU &&
                          cfg.head.num_classes == 3 && cfg.data.image_size == 256 &&
                          samples.size() == 20;
  const auto t0 = std::chrono::steady_clock::now();
  Detector model(cfg);
  TrainOptions opts;
  opts.out_dir = ctx.work / "overfit";
  const TrainResult run = train(model, samples, opts);
  const EvalOutput ev = evaluate(model, samples, cfg.data.batch_size);
  const double secs = seconds_since(t0);

  const auto smooth = window_means(run.steps, kSmoothWindow);
  bool decreasing = smooth.size() >= 2;
  std::ostringstream series;
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    if (i > 0 && !(smooth[i] < smooth[i - 1])) decreasing = false;
    series << (i ? " " : "") << fmt("%.3f", smooth[i]);
  }
  const bool ok = full_model && run.steps.size() <= kOverfitMaxSteps &&
                  ev.result.ap50 >= kOverfitAp50 && secs <= kOverfitBudgetSeconds && decreasing;
  std::ostringstream d;
  d << (full_model ? "full model" : "NOT the full model") << ", " << samples.size()
    << " images; AP50 " << fmt("%.4f", ev.result.ap50) << " (>= 0.90) after "
    << run.steps.size() << " steps (<= 800); " << fmt("%.0f s (<= 1200 s)", secs)
    << "; 50-step window means " << (decreasing ? "strictly decreasing" : "NOT decreasing")
    << ": " << series.str();
  return {ok, d.str()};
}

Outcome toy_ablation(Context& ctx) {
  ModelConfig cfg = load_config(ctx.overfit_config);
  cfg.optimizer.max_steps = kAblationSteps;
  const auto samples = ctx.samples(cfg);
  const auto rows = run_ablation(cfg, samples, ctx.work / "ablation");
  const std::string md = ablation_markdown(rows);
  std::ofstream(ctx.work / "ablation.md") << md;
  bool ok = rows.size() == 4;
  std::string names;
  for (const auto& r : rows) {
    ok = ok && r.all_finite && std::isfinite(r.final_loss) && r.steps == kAblationSteps;
    names += (names.empty() ? "" : " | ") + r.variant.name + fmt(" (loss %.3f)", r.final_loss);
  }
  const std::vector<std::string> expected = {"FCOS baseline", "+CIoU", "+CIoU +GC",
                                             "AGSFCOS (+CIoU +GC +PConv)"};
  for (std::size_t i = 0; i < rows.size() && i < 4; ++i) {
    ok = ok && rows[i].variant.name == expected[i] && md.find(expected[i]) != std::string::npos;
  }
  return {ok, std::to_string(rows.size()) + " rows, all finite: " + names};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility(Context& ctx) {
  ModelConfig cfg = load_config(ctx.overfit_config);
  cfg.optimizer.max_steps = kReproSteps;
  cfg.eval_interval_epochs = 0;
  const auto samples = ctx.samples(cfg);
  auto run = [&](const std::string& name, std::size_t stop, std::optional<fs::path> resume,
                 Detector& model) {
    TrainOptions o;
    o.out_dir = ctx.work / name;
    o.stop_at_step = stop;
    o.resume = std::move(resume);
    if (!resume) fs::remove_all(o.out_dir);
    return train(model, samples, o);
  };
  Detector a(cfg), b(cfg), c(cfg), c2(cfg);
  run("repro_a", 0, std::nullopt, a);
  run("repro_b", 0, std::nullopt, b);
  run("repro_c", kReproSteps / 2, std::nullopt, c);
  run("repro_c", 0, ctx.work / "repro_c" / "checkpoint", c2);

  const std::string log_a = slurp(ctx.work / "repro_a" / "metrics.csv");
  const bool same_logs = !log_a.empty() && log_a == slurp(ctx.work / "repro_b" / "metrics.csv");
  bool same_params = true;
  const auto& pa = a.parameters().items();
  const auto& pc = c2.parameters().items();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t k = 0; k < pa[i].value.numel(); ++k) {
      same_params = same_params && pa[i].value[k] == pc[i].value[k];
    }
  }
  const bool resumed_log = log_a == slurp(ctx.work / "repro_c" / "metrics.csv");
  const bool ok = same_logs && same_params && resumed_log;
  return {ok, std::string("same-seed metric logs ") + (same_logs ? "identical" : "DIFFER") +
                  "; 100 steps vs 50 + resume 50: parameters " +
                  (same_params ? "bit-identical" : "DIFFER") + ", metric log " +
                  (resumed_log ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "agsfcos_acceptance";
  ctx.cli = AGSFCOS_CLI_PATH;
  ctx.overfit_config = AGSFCOS_ACCEPTANCE_DIR "/overfit_config.json";
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string name; std::getline(ss, name, ',');) only.insert(name);
    } else {
      std::fprintf(stderr, "usage: %s [--work DIR] [--only name[,name...]]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"gradient-correctness", gradient_correctness},
      {"pconv-cost", pconv_cost},
      {"loss-oracles", loss_oracles},
      {"gc-identity-normalization", gc_block},
      {"fpn-shape-law", fpn_shape_law},
      {"evaluator-parity", evaluator_parity},
      {"end-to-end-overfit", end_to_end_overfit},
      {"toy-ablation", toy_ablation},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
