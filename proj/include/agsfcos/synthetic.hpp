#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agsfcos/box.hpp"
#include "agsfcos/dataset.hpp"
#include "agsfcos/image_io.hpp"

namespace agsfcos {

enum class ShapeKind : std::size_t { kRectangle = 0, kEllipse = 1, kTriangle = 2 };

inline constexpr std::size_t kSynthClasses = 3;
const char* shape_name(ShapeKind kind);

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t image_count = 20;
  std::size_t image_size = 256;  // multiple of 32
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  std::size_t min_size = 16;  // object side length range in pixels
  std::size_t max_size = 200;
  double noise = 0.08;  // background noise amplitude in [0,1] units
};

void validate(const SynthSpec& spec);

struct SynthImage {
  RgbImage image;
  std::vector<GroundTruthBox> gts;
  // Per-pixel owner: -1 for background, otherwise the index into gts.
  std::vector<int> owner;
};

// Renders image `index` of the dataset. Every image draws from its own RNG
// stream derived from (seed, index).
SynthImage render_synthetic(const SynthSpec& spec, std::size_t index);

// Writes images/NNNNNN.ppm and annotations.json under `out_dir` and returns
// the index (image ids start at 1).
DatasetIndex generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace agsfcos
