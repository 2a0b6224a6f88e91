#include "agsfcos/coco_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "agsfcos/errors.hpp"

namespace agsfcos {

namespace {

constexpr double kPrecisionEps = std::numeric_limits<double>::epsilon();

// Matching outcome for one (image, class, area range).
struct ImageEval {
  std::vector<double> scores;                // ranked, capped at max detections
  std::vector<std::vector<bool>> matched;    // [threshold][det]
  std::vector<std::vector<bool>> ignored;    // [threshold][det]
  std::size_t counted_gts = 0;               // non-ignored ground truth
};

ImageEval evaluate_image(const EvalImage& image, std::size_t class_id,
                         const std::array<double, 2>& area,
                         const CocoEvalParams& params) {
  std::vector<Box> gts;
  std::vector<bool> gt_ignore;
  for (const auto& g : image.gts) {
    if (g.class_id != class_id) continue;
    gts.push_back(g.box);
    const double a = g.box.area();
    gt_ignore.push_back(a < area[0] || a > area[1]);
  }
  // Non-ignored ground truth first, stable.
  std::vector<std::size_t> gt_order(gts.size());
  std::iota(gt_order.begin(), gt_order.end(), 0);
  std::stable_sort(gt_order.begin(), gt_order.end(), [&](std::size_t a, std::size_t b) {
    return !gt_ignore[a] && gt_ignore[b];
  });

  std::vector<Detection> dets;
  for (const auto& d : image.dets) {
    if (d.class_id == class_id) dets.push_back(d);
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (dets.size() > params.max_detections) dets.resize(params.max_detections);

  ImageEval out;
  const std::size_t thresholds = params.iou_thresholds.size();
  out.matched.assign(thresholds, std::vector<bool>(dets.size(), false));
  out.ignored.assign(thresholds, std::vector<bool>(dets.size(), false));
  for (const auto& d : dets) out.scores.push_back(d.score);
  for (bool ig : gt_ignore) out.counted_gts += ig ? 0 : 1;

  for (std::size_t t = 0; t < thresholds; ++t) {
    std::vector<bool> gt_taken(gts.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      double best = std::min(params.iou_thresholds[t], 1.0 - 1e-10);
      std::ptrdiff_t match = -1;
      for (std::size_t gi = 0; gi < gt_order.size(); ++gi) {
        const std::size_t g = gt_order[gi];
        if (gt_taken[g]) continue;
        if (match >= 0 && !gt_ignore[gt_order[match]] && gt_ignore[g]) break;
        const double overlap = iou(dets[d].box, gts[g]);
        if (overlap < best) continue;
        best = overlap;
        match = static_cast<std::ptrdiff_t>(gi);
      }
      if (match < 0) continue;
      const std::size_t g = gt_order[match];
      gt_taken[g] = true;
      out.matched[t][d] = true;
      out.ignored[t][d] = gt_ignore[g];
    }
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const double a = dets[d].box.area();
      if (!out.matched[t][d] && (a < area[0] || a > area[1])) out.ignored[t][d] = true;
    }
  }
  return out;
}

struct Accumulated {
  // [threshold][class] for one area range; -1 when undefined.
  std::vector<std::vector<double>> precision;
  std::vector<std::vector<double>> recall;
};

Accumulated accumulate(std::span<const EvalImage> images,
                       const std::vector<std::size_t>& classes,
                       const std::array<double, 2>& area,
                       const CocoEvalParams& params) {
  const std::size_t thresholds = params.iou_thresholds.size();
  Accumulated acc;
  acc.precision.assign(thresholds, std::vector<double>(classes.size(), -1.0));
  acc.recall.assign(thresholds, std::vector<double>(classes.size(), -1.0));

  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    std::vector<ImageEval> evals;
    std::size_t counted = 0;
    for (const auto& image : images) {
      evals.push_back(evaluate_image(image, classes[ci], area, params));
      counted += evals.back().counted_gts;
    }
    if (counted == 0) continue;

    // Global ranking; stable so ties keep image order.
    struct Ref {
      double score;
      std::size_t image, det;
    };
    std::vector<Ref> refs;
    for (std::size_t i = 0; i < evals.size(); ++i) {
      for (std::size_t d = 0; d < evals[i].scores.size(); ++d) {
        refs.push_back({evals[i].scores[d], i, d});
      }
    }
    std::stable_sort(refs.begin(), refs.end(),
                     [](const Ref& a, const Ref& b) { return a.score > b.score; });

    for (std::size_t t = 0; t < thresholds; ++t) {
      std::vector<double> prec, rec;
      double tp = 0, fp = 0;
      for (const Ref& r : refs) {
        const ImageEval& e = evals[r.image];
        if (!e.ignored[t][r.det]) {
          if (e.matched[t][r.det]) {
            tp += 1;
          } else {
            fp += 1;
          }
        }
        rec.push_back(tp / double(counted));
        prec.push_back(tp / (tp + fp + kPrecisionEps));
      }
      acc.recall[t][ci] = rec.empty() ? 0.0 : rec.back();
      for (std::size_t i = prec.size(); i-- > 1;) {
        prec[i - 1] = std::max(prec[i - 1], prec[i]);
      }
      double total = 0.0;
      for (std::size_t k = 0; k < params.recall_points; ++k) {
        const double threshold = double(k) / double(params.recall_points - 1);
        const auto it = std::lower_bound(rec.begin(), rec.end(), threshold);
        if (it != rec.end()) total += prec[std::size_t(it - rec.begin())];
      }
      acc.precision[t][ci] = total / double(params.recall_points);
    }
  }
  return acc;
}

double mean_defined(const std::vector<std::vector<double>>& grid,
                    std::ptrdiff_t only_threshold = -1) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    if (only_threshold >= 0 && t != std::size_t(only_threshold)) continue;
    for (double v : grid[t]) {
      if (v > -1.0) {
        total += v;
        ++count;
      }
    }
  }
  return count ? total / double(count) : -1.0;
}

std::ptrdiff_t threshold_index(const CocoEvalParams& params, double value) {
  for (std::size_t i = 0; i < params.iou_thresholds.size(); ++i) {
    if (std::abs(params.iou_thresholds[i] - value) < 1e-12) return std::ptrdiff_t(i);
  }
  return -1;
}

}  // namespace

CocoEvalParams::CocoEvalParams() {
  for (int i = 0; i < 10; ++i) iou_thresholds.push_back((50.0 + 5.0 * i) / 100.0);
}

EvalResult coco_eval(std::span<const EvalImage> images, const CocoEvalParams& params) {
  std::set<std::int64_t> ids;
  std::set<std::size_t> class_set;
  for (const auto& image : images) {
    if (!ids.insert(image.image_id).second) {
      throw InputError("coco_eval: duplicate image id " + std::to_string(image.image_id));
    }
    for (const auto& g : image.gts) class_set.insert(g.class_id);
  }
  const std::vector<std::size_t> classes(class_set.begin(), class_set.end());

  EvalResult r;
  const auto all = accumulate(images, classes, params.area_ranges[0], params);
  r.ap = mean_defined(all.precision);
  r.ap50 = mean_defined(all.precision, threshold_index(params, 0.5));
  r.ap75 = mean_defined(all.precision, threshold_index(params, 0.75));
  r.ar = mean_defined(all.recall);
  double* ap_bucket[] = {&r.ap_s, &r.ap_m, &r.ap_l};
  double* ar_bucket[] = {&r.ar_s, &r.ar_m, &r.ar_l};
  for (std::size_t a = 1; a < 4; ++a) {
    const auto bucket = accumulate(images, classes, params.area_ranges[a], params);
    *ap_bucket[a - 1] = mean_defined(bucket.precision);
    *ar_bucket[a - 1] = mean_defined(bucket.recall);
  }
  return r;
}

std::string format_eval(const EvalResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "AP %.4f  AP50 %.4f  AP75 %.4f  APs %.4f  APm %.4f  APl %.4f\n"
                "AR %.4f  ARs %.4f  ARm %.4f  ARl %.4f",
                r.ap, r.ap50, r.ap75, r.ap_s, r.ap_m, r.ap_l, r.ar, r.ar_s, r.ar_m,
                r.ar_l);
  return buf;
}

}  // namespace agsfcos
