#include "agsfcos/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace agsfcos {

namespace {

std::string pct(double v) {
  if (v < 0.0) return "-";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::vector<Variant> ablation_variants() {
  return {
      {"FCOS baseline", "baseline", false, TowerKind::kConv, RegressionLoss::kGIoU},
      {"+CIoU", "ciou", false, TowerKind::kConv, RegressionLoss::kCIoU},
      {"+CIoU +GC", "ciou_gc", true, TowerKind::kConv, RegressionLoss::kCIoU},
      {"AGSFCOS (+CIoU +GC +PConv)", "full", true, TowerKind::kPConv, RegressionLoss::kCIoU},
  };
}

ModelConfig apply_variant(ModelConfig config, const Variant& variant) {
  config.gc.enabled = variant.gc;
  config.head.tower = variant.tower;
  config.loss.regression = variant.regression;
  return config;
}

std::vector<AblationRow> run_ablation(const ModelConfig& base, std::span<const Sample> samples,
                                      const std::filesystem::path& out_dir,
                                      const std::function<void(const std::string&)>& progress) {
  std::vector<AblationRow> rows;
  for (const Variant& v : ablation_variants()) {
    if (progress) progress("training variant " + v.name);
    ModelConfig cfg = apply_variant(base, v);
    cfg.eval_interval_epochs = 0;
    Detector model(cfg);
    TrainOptions options;
    if (!out_dir.empty()) options.out_dir = out_dir / v.slug;
    const TrainResult run = train(model, samples, options);

    AblationRow row;
    row.variant = v;
    row.steps = run.steps.size();
    for (const StepLog& s : run.steps) {
      if (!std::isfinite(s.total)) row.all_finite = false;
    }
    row.final_loss = run.steps.empty() ? 0.0 : run.steps.back().total;
    row.eval = evaluate(model, samples, cfg.data.batch_size).result;
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "| Variant | GC | Tower | Box loss | Steps | Final loss | AP | AP50 | AP75 | APs | APm | APl |\n"
      << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const AblationRow& r : rows) {
    out << "| " << r.variant.name << " | " << (r.variant.gc ? "yes" : "no") << " | "
        << to_string(r.variant.tower) << " | " << to_string(r.variant.regression) << " | "
        << r.steps << " | " << num(r.final_loss) << " | " << pct(r.eval.ap) << " | "
        << pct(r.eval.ap50) << " | " << pct(r.eval.ap75) << " | " << pct(r.eval.ap_s)
        << " | " << pct(r.eval.ap_m) << " | " << pct(r.eval.ap_l) << " |\n";
  }
  return out.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,gc,tower,box_loss,steps,final_loss,ap,ap50,ap75,ap_s,ap_m,ap_l\n";
  for (const AblationRow& r : rows) {
    out << r.variant.slug << "," << (r.variant.gc ? 1 : 0) << ","
        << to_string(r.variant.tower) << "," << to_string(r.variant.regression) << ","
        << r.steps << "," << num(r.final_loss) << "," << num(r.eval.ap) << ","
        << num(r.eval.ap50) << "," << num(r.eval.ap75) << "," << num(r.eval.ap_s) << ","
        << num(r.eval.ap_m) << "," << num(r.eval.ap_l) << "\n";
  }
  return out.str();
}

}  // namespace agsfcos
