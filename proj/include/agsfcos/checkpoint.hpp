#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "agsfcos/parameters.hpp"
#include "agsfcos/tensor.hpp"

namespace agsfcos {

struct TrainState {
  std::size_t step = 0;   // completed optimizer steps
  std::size_t epoch = 0;  // epoch of the next step
  std::uint64_t seed = 0;
  double best_ap50 = -1.0;
  std::vector<Tensor> momentum;  // one buffer per parameter, registration order
};

TrainState fresh_train_state(const ParameterSet& params, std::uint64_t seed);

// Directory layout:
//   manifest.json          names, shapes and file of every blob + train state
//   params/NNNN.ten        parameter values
//   momentum/NNNN.ten      optimizer buffers
void save_checkpoint(const std::filesystem::path& dir, const ParameterSet& params,
                     const TrainState& state);

// Copies stored values into `params` in place. Throws CompatibilityError
// naming every missing, unexpected or reshaped parameter.
TrainState load_checkpoint(const std::filesystem::path& dir, ParameterSet& params);

}  // namespace agsfcos
