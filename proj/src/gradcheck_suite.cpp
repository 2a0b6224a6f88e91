#include "agsfcos/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include "agsfcos/backbone.hpp"
#include "agsfcos/box.hpp"
#include "agsfcos/fpn.hpp"
#include "agsfcos/gc_block.hpp"
#include "agsfcos/gradcheck.hpp"
#include "agsfcos/losses.hpp"
#include "agsfcos/ops.hpp"
#include "agsfcos/parameters.hpp"
#include "agsfcos/sepc_head.hpp"

namespace agsfcos {

namespace {

constexpr std::size_t kCoordsPerLeaf = 48;

// Zero-initialized tensors (GC output, residual gammas) would make their
// upstream gradients vanish, so every leaf gets a random offset first.
void jitter(ParameterSet& params, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 0.3);
  for (auto& p : params.items()) {
    for (double& v : p.value.mutable_values()) v += noise(rng);
  }
}

Tensor random_leaf(Shape shape, Rng& rng) {
  Tensor t = normal_tensor(std::move(shape), 1.0, rng);
  t.set_requires_grad(true);
  return t;
}

// Contracts a tensor against a fixed random projection so that every output
// coordinate contributes to the scalar under test.
Tensor project(const Tensor& x, Rng& rng) {
  Tensor r = normal_tensor(x.shape(), 1.0, rng);
  return sum(mul(x, r));
}

std::vector<Tensor> leaves_of(ParameterSet& params) {
  std::vector<Tensor> out;
  for (auto& p : params.items()) out.push_back(p.value);
  return out;
}

ModuleCheck timed(const std::string& name, const std::function<GradcheckResult()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckResult r = fn();
  const auto t1 = std::chrono::steady_clock::now();
  return {name, r.max_rel_error, r.coords_checked,
          std::chrono::duration<double>(t1 - t0).count(),
          r.max_rel_error <= kGradcheckTolerance};
}

GradcheckResult check_backbone(Rng& rng) {
  ParameterSet params;
  BackboneConfig cfg;
  cfg.stem_width = 4;
  cfg.widths = {4, 8, 8};
  cfg.blocks_per_stage = 1;
  Backbone net(params, cfg, rng);
  jitter(params, rng);
  std::vector<Tensor> leaves = leaves_of(params);
  leaves.push_back(random_leaf({1, 3, 32, 32}, rng));
  const Tensor image = leaves.back();
  const std::uint64_t proj_seed = rng();
  return gradcheck_leaves(
      [&] {
        Rng r(proj_seed);
        const FeatureLevels f = net.forward(image);
        return add(add(project(f.c3, r), project(f.c4, r)), project(f.c5, r));
      },
      leaves, kGradcheckStep, kCoordsPerLeaf);
}

GradcheckResult check_gc(const ModelConfig& config, Rng& rng) {
  ParameterSet params;
  const std::size_t channels = 2 * config.gc.ratio;
  GcBlockParams gc = make_gc_block(params, "gc", channels, config.gc.ratio, rng);
  jitter(params, rng);
  std::vector<Tensor> leaves = leaves_of(params);
  leaves.push_back(random_leaf({2, channels, 4, 4}, rng));
  const Tensor x = leaves.back();
  const std::uint64_t proj_seed = rng();
  return gradcheck_leaves(
      [&] {
        Rng r(proj_seed);
        return project(gc_forward(x, gc), r);
      },
      leaves, kGradcheckStep, kCoordsPerLeaf);
}

GradcheckResult check_fpn(Rng& rng) {
  ParameterSet params;
  FpnParams fpn = make_fpn(params, "fpn", {4, 6, 8}, 4, true, rng);
  jitter(params, rng);
  std::vector<Tensor> leaves = leaves_of(params);
  FeatureLevels f{random_leaf({1, 4, 8, 8}, rng), random_leaf({1, 6, 4, 4}, rng),
                  random_leaf({1, 8, 2, 2}, rng)};
  leaves.push_back(f.c3);
  leaves.push_back(f.c4);
  leaves.push_back(f.c5);
  const std::uint64_t proj_seed = rng();
  return gradcheck_leaves(
      [&] {
        Rng r(proj_seed);
        const PyramidLevels p = fpn_forward(f, fpn);
        Tensor total = project(p[0], r);
        for (std::size_t l = 1; l < p.size(); ++l) total = add(total, project(p[l], r));
        return total;
      },
      leaves, kGradcheckStep, kCoordsPerLeaf);
}

GradcheckResult check_pconv_stack(const ModelConfig& config, Rng& rng) {
  ParameterSet params;
  std::vector<PConvParams> stack;
  for (std::size_t i = 0; i < config.head.depth; ++i) {
    stack.push_back(make_pconv(params, "pconv" + std::to_string(i), 4, true, rng));
  }
  jitter(params, rng);
  std::vector<Tensor> leaves = leaves_of(params);
  PyramidLevels input;
  for (std::size_t s : {8, 4, 2}) {
    input.maps.push_back(random_leaf({1, 4, s, s}, rng));
    leaves.push_back(input.maps.back());
  }
  const std::uint64_t proj_seed = rng();
  return gradcheck_leaves(
      [&] {
        Rng r(proj_seed);
        PyramidLevels x = input;
        for (std::size_t i = 0; i < stack.size(); ++i) {
          x = pconv_forward(x, stack[i]);
          if (i + 1 < stack.size()) {
            for (Tensor& m : x.maps) m = relu(m);
          }
        }
        Tensor total = project(x[0], r);
        for (std::size_t l = 1; l < x.size(); ++l) total = add(total, project(x[l], r));
        return total;
      },
      leaves, kGradcheckStep, kCoordsPerLeaf);
}

GradcheckResult check_focal(const ModelConfig& config, Rng& rng) {
  std::vector<Tensor> leaves = {random_leaf({24}, rng)};
  std::vector<double> targets(24);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    targets[i] = (rng() % 4 == 0) ? 1.0 : 0.0;
    positives += targets[i] == 1.0;
  }
  const Tensor logits = leaves[0];
  return gradcheck_leaves(
      [&] {
        return focal_loss(sigmoid(logits), targets, config.loss.focal_alpha,
                          config.loss.focal_gamma, positives);
      },
      leaves);
}

GradcheckResult check_centerness(Rng& rng) {
  std::vector<Tensor> leaves = {random_leaf({12}, rng)};
  std::uniform_real_distribution<double> side(1.0, 40.0);
  std::vector<double> targets;
  for (int i = 0; i < 12; ++i) {
    targets.push_back(centerness(side(rng), side(rng), side(rng), side(rng)));
  }
  const Tensor logits = leaves[0];
  return gradcheck_leaves([&] { return centerness_bce(logits, targets).value; }, leaves);
}

GradcheckResult check_ciou(Rng& rng) {
  constexpr std::size_t kBoxes = 6;
  std::uniform_real_distribution<double> pos(0.0, 20.0);
  std::uniform_real_distribution<double> extent(4.0, 30.0);
  std::vector<Box> gt;
  std::vector<double> x1, y1, x2, y2;
  for (std::size_t i = 0; i < kBoxes; ++i) {
    const double gx = pos(rng), gy = pos(rng);
    gt.push_back({gx, gy, gx + extent(rng), gy + extent(rng)});
    const double px = gx + pos(rng) - 10.0, py = gy + pos(rng) - 10.0;
    x1.push_back(px);
    y1.push_back(py);
    x2.push_back(px + extent(rng));
    y2.push_back(py + extent(rng));
  }
  std::vector<Tensor> leaves = {Tensor({kBoxes}, x1), Tensor({kBoxes}, y1),
                                Tensor({kBoxes}, x2), Tensor({kBoxes}, y2)};
  for (Tensor& t : leaves) t.set_requires_grad(true);
  const std::vector<double> alpha =
      ciou_trade_off({leaves[0], leaves[1], leaves[2], leaves[3]}, gt);
  return gradcheck_leaves(
      [&] {
        const BoxTensors pred{leaves[0], leaves[1], leaves[2], leaves[3]};
        return sum(box_regression_loss(pred, gt, RegressionLoss::kCIoU, alpha));
      },
      leaves);
}

}  // namespace

bool GradcheckReport::passed() const {
  if (skipped) return true;
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

GradcheckReport run_gradcheck_suite(const ModelConfig& config, std::uint64_t seed) {
  GradcheckReport report;
  if (config.precision != Precision::kF64) {
    report.skipped = true;
    report.warning =
        "gradcheck requires 64-bit precision; the configured 32-bit mode is skipped";
    return report;
  }
  PrecisionScope precision(Precision::kF64);
  Rng rng(seed);
  report.checks.push_back(timed("backbone", [&] { return check_backbone(rng); }));
  report.checks.push_back(timed("gc", [&] { return check_gc(config, rng); }));
  report.checks.push_back(timed("fpn", [&] { return check_fpn(rng); }));
  report.checks.push_back(timed("pconv_stack", [&] { return check_pconv_stack(config, rng); }));
  report.checks.push_back(timed("focal", [&] { return check_focal(config, rng); }));
  report.checks.push_back(timed("centerness", [&] { return check_centerness(rng); }));
  report.checks.push_back(timed("ciou", [&] { return check_ciou(rng); }));
  return report;
}

std::string format_report(const GradcheckReport& report) {
  std::ostringstream out;
  if (report.skipped) {
    out << "warning: " << report.warning << "\n";
    return out.str();
  }
  for (const auto& c : report.checks) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s max_rel_error=%.3e coords=%zu time=%.2fs %s\n",
                  c.module.c_str(), c.max_rel_error, c.coords, c.seconds,
                  c.passed ? "ok" : "FAIL");
    out << line;
  }
  out << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return out.str();
}

}  // namespace agsfcos
