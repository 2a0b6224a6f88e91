#include "agsfcos/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "agsfcos/errors.hpp"

namespace agsfcos {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown config key: " + where + "." + key);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

TowerKind parse_tower(const std::string& s) {
  if (s == "pconv") return TowerKind::kPConv;
  if (s == "conv") return TowerKind::kConv;
  throw ConfigError("head.tower must be \"pconv\" or \"conv\", got " + s);
}

RegressionLoss parse_regression(const std::string& s) {
  if (s == "iou") return RegressionLoss::kIoU;
  if (s == "giou") return RegressionLoss::kGIoU;
  if (s == "ciou") return RegressionLoss::kCIoU;
  throw ConfigError("loss.regression must be iou, giou or ciou, got " + s);
}

}  // namespace

std::string to_string(TowerKind kind) {
  return kind == TowerKind::kPConv ? "pconv" : "conv";
}

std::string to_string(RegressionLoss kind) {
  switch (kind) {
    case RegressionLoss::kIoU:
      return "iou";
    case RegressionLoss::kGIoU:
      return "giou";
    case RegressionLoss::kCIoU:
      return "ciou";
  }
  return "ciou";
}

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.backbone.stem_width == 0) fail("backbone.stem_width must be positive");
  for (std::size_t w : c.backbone.widths) {
    if (w == 0) fail("backbone.widths must be positive");
  }
  if (c.backbone.blocks_per_stage == 0) fail("backbone.blocks_per_stage must be >= 1");
  if (c.gc.ratio == 0) fail("gc.ratio must be positive");
  if (c.gc.enabled) {
    for (std::size_t w : c.backbone.widths) {
      if (w % c.gc.ratio != 0) {
        fail("gc.ratio " + std::to_string(c.gc.ratio) +
             " does not divide backbone width " + std::to_string(w));
      }
    }
  }
  if (c.fpn.width == 0) fail("fpn.width must be positive");
  if (c.head.num_classes == 0) fail("head.num_classes must be positive");
  if (!(c.head.initial_distance > 0.0) || !std::isfinite(c.head.initial_distance)) {
    fail("head.initial_distance must be positive and finite");
  }
  if (!(c.head.prior_prob > 0.0 && c.head.prior_prob < 1.0)) {
    fail("head.prior_prob must lie in (0,1)");
  }
  if (!(c.loss.focal_alpha > 0.0 && c.loss.focal_alpha < 1.0)) {
    fail("loss.focal_alpha must lie in (0,1)");
  }
  if (!(c.loss.focal_gamma >= 0.0)) fail("loss.focal_gamma must be >= 0");
  const auto& a = c.assigner;
  if (a.strides.size() != 3 || a.strides != std::vector<std::size_t>{8, 16, 32}) {
    fail("assigner.strides must be [8,16,32] to match the C3-C5 pyramid");
  }
  if (a.ranges.size() != a.strides.size()) {
    fail("assigner.ranges must have one entry per stride");
  }
  for (std::size_t i = 0; i < a.ranges.size(); ++i) {
    if (!(a.ranges[i].first < a.ranges[i].second) || a.ranges[i].first < 0) {
      fail("assigner.ranges must be increasing intervals");
    }
    if (i > 0 && a.ranges[i].first != a.ranges[i - 1].second) {
      fail("assigner.ranges must be contiguous");
    }
  }
  const auto& p = c.postprocess;
  if (!(p.score_threshold >= 0.0 && p.score_threshold < 1.0)) {
    fail("postprocess.score_threshold must lie in [0,1)");
  }
  if (!(p.nms_iou > 0.0 && p.nms_iou <= 1.0)) fail("postprocess.nms_iou must lie in (0,1]");
  if (p.pre_nms_top_k == 0 || p.max_detections == 0) {
    fail("postprocess top-k limits must be positive");
  }
  const auto& o = c.optimizer;
  if (!(o.lr >= 0.0) || !std::isfinite(o.lr)) fail("optimizer.lr must be >= 0");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) fail("optimizer.momentum must lie in [0,1)");
  if (!(o.weight_decay >= 0.0)) fail("optimizer.weight_decay must be >= 0");
  if (!(o.decay_factor > 0.0)) fail("optimizer.decay_factor must be > 0");
  if (o.epochs == 0) fail("optimizer.epochs must be positive");
  const auto& d = c.data;
  if (d.batch_size == 0) fail("data.batch_size must be positive");
  if (d.image_size == 0 || d.image_size % 32 != 0) {
    fail("data.image_size must be a positive multiple of 32");
  }
  for (double s : d.std) {
    if (!(s > 0.0)) fail("data.std entries must be positive");
  }
}

ModelConfig config_from_json(const json& doc) {
  ModelConfig c;
  reject_unknown(doc, "config",
                 {"backbone", "gc", "fpn", "head", "loss", "assigner",
                  "postprocess", "optimizer", "data", "precision", "seed",
                  "eval_interval_epochs"});
  if (doc.contains("backbone")) {
    const json& j = doc["backbone"];
    reject_unknown(j, "backbone", {"stem_width", "widths", "blocks_per_stage"});
    read(j, "stem_width", "backbone", c.backbone.stem_width);
    read(j, "widths", "backbone", c.backbone.widths);
    read(j, "blocks_per_stage", "backbone", c.backbone.blocks_per_stage);
  }
  if (doc.contains("gc")) {
    const json& j = doc["gc"];
    reject_unknown(j, "gc", {"enabled", "ratio"});
    read(j, "enabled", "gc", c.gc.enabled);
    read(j, "ratio", "gc", c.gc.ratio);
  }
  if (doc.contains("fpn")) {
    const json& j = doc["fpn"];
    reject_unknown(j, "fpn", {"width", "smooth"});
    read(j, "width", "fpn", c.fpn.width);
    read(j, "smooth", "fpn", c.fpn.smooth);
  }
  if (doc.contains("head")) {
    const json& j = doc["head"];
    reject_unknown(j, "head", {"depth", "tower", "num_classes", "prior_prob", "initial_distance"});
    read(j, "depth", "head", c.head.depth);
    std::string tower = to_string(c.head.tower);
    read(j, "tower", "head", tower);
    c.head.tower = parse_tower(tower);
    read(j, "num_classes", "head", c.head.num_classes);
    read(j, "prior_prob", "head", c.head.prior_prob);
    read(j, "initial_distance", "head", c.head.initial_distance);
  }
  if (doc.contains("loss")) {
    const json& j = doc["loss"];
    reject_unknown(j, "loss", {"focal_alpha", "focal_gamma", "regression"});
    read(j, "focal_alpha", "loss", c.loss.focal_alpha);
    read(j, "focal_gamma", "loss", c.loss.focal_gamma);
    std::string reg = to_string(c.loss.regression);
    read(j, "regression", "loss", reg);
    c.loss.regression = parse_regression(reg);
  }
  if (doc.contains("assigner")) {
    const json& j = doc["assigner"];
    reject_unknown(j, "assigner", {"strides", "ranges"});
    read(j, "strides", "assigner", c.assigner.strides);
    if (j.contains("ranges")) {
      c.assigner.ranges.clear();
      for (const json& r : j["ranges"]) {
        if (!r.is_array() || r.size() != 2 || !r[0].is_number()) {
          throw ConfigError("assigner.ranges entries must be [lo, hi|null]");
        }
        const double hi = r[1].is_null() ? kUnbounded : r[1].get<double>();
        c.assigner.ranges.emplace_back(r[0].get<double>(), hi);
      }
    }
  }
  if (doc.contains("postprocess")) {
    const json& j = doc["postprocess"];
    reject_unknown(j, "postprocess",
                   {"score_threshold", "nms_iou", "pre_nms_top_k", "max_detections"});
    read(j, "score_threshold", "postprocess", c.postprocess.score_threshold);
    read(j, "nms_iou", "postprocess", c.postprocess.nms_iou);
    read(j, "pre_nms_top_k", "postprocess", c.postprocess.pre_nms_top_k);
    read(j, "max_detections", "postprocess", c.postprocess.max_detections);
  }
  if (doc.contains("optimizer")) {
    const json& j = doc["optimizer"];
    reject_unknown(j, "optimizer",
                   {"lr", "momentum", "weight_decay", "decay_epochs",
                    "decay_factor", "epochs", "clip_norm", "max_steps"});
    read(j, "lr", "optimizer", c.optimizer.lr);
    read(j, "momentum", "optimizer", c.optimizer.momentum);
    read(j, "weight_decay", "optimizer", c.optimizer.weight_decay);
    read(j, "decay_epochs", "optimizer", c.optimizer.decay_epochs);
    read(j, "decay_factor", "optimizer", c.optimizer.decay_factor);
    read(j, "epochs", "optimizer", c.optimizer.epochs);
    read(j, "clip_norm", "optimizer", c.optimizer.clip_norm);
    read(j, "max_steps", "optimizer", c.optimizer.max_steps);
  }
  if (doc.contains("data")) {
    const json& j = doc["data"];
    reject_unknown(j, "data", {"batch_size", "image_size", "mean", "std", "hflip"});
    read(j, "batch_size", "data", c.data.batch_size);
    read(j, "image_size", "data", c.data.image_size);
    read(j, "mean", "data", c.data.mean);
    read(j, "std", "data", c.data.std);
    read(j, "hflip", "data", c.data.hflip);
  }
  if (doc.contains("precision")) {
    std::string p;
    read(doc, "precision", "config", p);
    if (p == "f64") {
      c.precision = Precision::kF64;
    } else if (p == "f32") {
      c.precision = Precision::kF32;
    } else {
      throw ConfigError("precision must be \"f64\" or \"f32\", got " + p);
    }
  }
  read(doc, "seed", "config", c.seed);
  read(doc, "eval_interval_epochs", "config", c.eval_interval_epochs);
  validate(c);
  return c;
}

json config_to_json(const ModelConfig& c) {
  json ranges = json::array();
  for (const auto& [lo, hi] : c.assigner.ranges) {
    ranges.push_back({lo, std::isinf(hi) ? json(nullptr) : json(hi)});
  }
  return {
      {"backbone",
       {{"stem_width", c.backbone.stem_width},
        {"widths", c.backbone.widths},
        {"blocks_per_stage", c.backbone.blocks_per_stage}}},
      {"gc", {{"enabled", c.gc.enabled}, {"ratio", c.gc.ratio}}},
      {"fpn", {{"width", c.fpn.width}, {"smooth", c.fpn.smooth}}},
      {"head",
       {{"depth", c.head.depth},
        {"tower", to_string(c.head.tower)},
        {"num_classes", c.head.num_classes},
        {"prior_prob", c.head.prior_prob},
        {"initial_distance", c.head.initial_distance}}},
      {"loss",
       {{"focal_alpha", c.loss.focal_alpha},
        {"focal_gamma", c.loss.focal_gamma},
        {"regression", to_string(c.loss.regression)}}},
      {"assigner", {{"strides", c.assigner.strides}, {"ranges", ranges}}},
      {"postprocess",
       {{"score_threshold", c.postprocess.score_threshold},
        {"nms_iou", c.postprocess.nms_iou},
        {"pre_nms_top_k", c.postprocess.pre_nms_top_k},
        {"max_detections", c.postprocess.max_detections}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"momentum", c.optimizer.momentum},
        {"weight_decay", c.optimizer.weight_decay},
        {"decay_epochs", c.optimizer.decay_epochs},
        {"decay_factor", c.optimizer.decay_factor},
        {"epochs", c.optimizer.epochs},
        {"clip_norm", c.optimizer.clip_norm},
        {"max_steps", c.optimizer.max_steps}}},
      {"data",
       {{"batch_size", c.data.batch_size},
        {"image_size", c.data.image_size},
        {"mean", c.data.mean},
        {"std", c.data.std},
        {"hflip", c.data.hflip}}},
      {"precision", c.precision == Precision::kF64 ? "f64" : "f32"},
      {"seed", c.seed},
      {"eval_interval_epochs", c.eval_interval_epochs},
  };
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const std::filesystem::path& path, const ModelConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << config_to_json(config).dump(2) << '\n';
}

}  // namespace agsfcos
