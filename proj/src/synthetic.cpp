#include "agsfcos/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "agsfcos/errors.hpp"
#include "agsfcos/splitmix.hpp"

namespace agsfcos {

namespace {

struct Placement {
  ShapeKind kind;
  std::size_t x0, y0, w, h;  // allocation rectangle
  std::array<int, 3> color;
};

bool inside(ShapeKind kind, const Placement& p, double px, double py) {
  const double u = (px - static_cast<double>(p.x0)) / static_cast<double>(p.w);
  const double v = (py - static_cast<double>(p.y0)) / static_cast<double>(p.h);
  switch (kind) {
    case ShapeKind::kRectangle:
      return u >= 0.0 && u < 1.0 && v >= 0.0 && v < 1.0;
    case ShapeKind::kEllipse: {
      const double du = 2.0 * u - 1.0;
      const double dv = 2.0 * v - 1.0;
      return du * du + dv * dv <= 1.0;
    }
    case ShapeKind::kTriangle:
      // Apex at top centre, base along the bottom edge.
      return v >= 0.0 && v < 1.0 && std::abs(u - 0.5) <= 0.5 * v;
  }
  return false;
}

bool overlaps(const Placement& a, const Placement& b, std::size_t margin) {
  return a.x0 < b.x0 + b.w + margin && b.x0 < a.x0 + a.w + margin &&
         a.y0 < b.y0 + b.h + margin && b.y0 < a.y0 + a.h + margin;
}

constexpr std::array<std::array<int, 3>, kSynthClasses> kBaseColors = {{
    {210, 60, 50},   // rectangle
    {50, 190, 70},   // ellipse
    {60, 80, 220},   // triangle
}};

constexpr std::size_t kPlacementTries = 50;
constexpr std::size_t kMargin = 4;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

const char* shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "unknown";
}

void validate(const SynthSpec& spec) {
  if (spec.image_size == 0 || spec.image_size % 32 != 0) {
    throw ConfigError("synth: image_size must be a positive multiple of 32");
  }
  if (spec.min_objects > spec.max_objects) {
    throw ConfigError("synth: min_objects exceeds max_objects");
  }
  if (spec.min_size < 4 || spec.min_size > spec.max_size) {
    throw ConfigError("synth: need 4 <= min_size <= max_size");
  }
  if (spec.max_size + 2 * kMargin > spec.image_size) {
    throw ConfigError("synth: max_size does not fit in the image");
  }
  if (!(spec.noise >= 0.0 && spec.noise <= 0.5)) {
    throw ConfigError("synth: noise must lie in [0, 0.5]");
  }
}

SynthImage render_synthetic(const SynthSpec& spec, std::size_t index) {
  validate(spec);
  SplitMix rng(mix_seed(spec.seed, index));
  const std::size_t n = spec.image_size;

  const std::size_t wanted = rng.range(spec.min_objects, spec.max_objects);
  std::vector<Placement> placed;
  for (std::size_t k = 0; k < wanted; ++k) {
    const auto kind = static_cast<ShapeKind>(rng.range(0, kSynthClasses - 1));
    const std::size_t w = rng.range(spec.min_size, spec.max_size);
    const std::size_t h = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(w * (0.6 + 0.8 * rng.unit()))), spec.min_size,
        spec.max_size);
    std::array<int, 3> color = kBaseColors[static_cast<std::size_t>(kind)];
    for (int& c : color) c += static_cast<int>(rng.range(0, 40)) - 20;
    for (std::size_t attempt = 0; attempt < kPlacementTries; ++attempt) {
      const Placement p{kind, rng.range(kMargin, n - kMargin - w),
                        rng.range(kMargin, n - kMargin - h), w, h, color};
      const bool clash = std::any_of(placed.begin(), placed.end(),
                                     [&](const Placement& q) { return overlaps(p, q, kMargin); });
      if (!clash) {
        placed.push_back(p);
        break;
      }
    }
  }

  SynthImage out;
  out.image = RgbImage(n, n);
  out.owner.assign(n * n, -1);
  const double base = 96.0 + 32.0 * rng.unit();
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      std::uint8_t* px = out.image.at(x, y);
      for (std::size_t c = 0; c < 3; ++c) {
        px[c] = to_byte(base + 255.0 * spec.noise * (2.0 * rng.unit() - 1.0));
      }
    }
  }

  for (std::size_t k = 0; k < placed.size(); ++k) {
    const Placement& p = placed[k];
    std::size_t x_lo = n, y_lo = n, x_hi = 0, y_hi = 0;
    for (std::size_t y = p.y0; y < p.y0 + p.h; ++y) {
      for (std::size_t x = p.x0; x < p.x0 + p.w; ++x) {
        if (!inside(p.kind, p, x + 0.5, y + 0.5)) continue;
        std::uint8_t* px = out.image.at(x, y);
        for (std::size_t c = 0; c < 3; ++c) {
          px[c] = to_byte(p.color[c] + 0.25 * 255.0 * spec.noise * (2.0 * rng.unit() - 1.0));
        }
        out.owner[y * n + x] = static_cast<int>(out.gts.size());
        x_lo = std::min(x_lo, x);
        y_lo = std::min(y_lo, y);
        x_hi = std::max(x_hi, x + 1);
        y_hi = std::max(y_hi, y + 1);
      }
    }
    if (x_hi <= x_lo || y_hi <= y_lo) continue;
    out.gts.push_back({{static_cast<double>(x_lo), static_cast<double>(y_lo),
                        static_cast<double>(x_hi), static_cast<double>(y_hi)},
                       static_cast<std::size_t>(p.kind)});
  }
  return out;
}

DatasetIndex generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  validate(spec);
  std::filesystem::create_directories(out_dir / "images");
  DatasetIndex index;
  index.root = out_dir;
  for (std::size_t c = 0; c < kSynthClasses; ++c) {
    index.categories.push_back({static_cast<std::int64_t>(c + 1),
                                shape_name(static_cast<ShapeKind>(c))});
  }
  for (std::size_t i = 0; i < spec.image_count; ++i) {
    const SynthImage im = render_synthetic(spec, i);
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.ppm", i);
    write_ppm(out_dir / name, im.image);
    const auto id = static_cast<std::int64_t>(i + 1);
    index.images.push_back({id, name, spec.image_size, spec.image_size});
    for (const auto& gt : im.gts) index.annotations.push_back({id, gt});
  }
  save_coco_annotations(out_dir / "annotations.json", index);
  return index;
}

}  // namespace agsfcos
