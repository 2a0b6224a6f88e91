#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agsfcos/config.hpp"

namespace agsfcos {

inline constexpr double kGradcheckTolerance = 1e-5;

struct ModuleCheck {
  std::string module;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  double seconds = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<ModuleCheck> checks;
  bool skipped = false;
  std::string warning;

  bool passed() const;
};

// Finite-difference checks of every trainable module on small random
// instances: backbone, gc, fpn, a pconv stack of config.head.depth layers,
// focal, centerness and ciou. A 32-bit config is skipped with a warning.
GradcheckReport run_gradcheck_suite(const ModelConfig& config, std::uint64_t seed);

std::string format_report(const GradcheckReport& report);

}  // namespace agsfcos
