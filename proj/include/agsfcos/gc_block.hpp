#pragma once

#include <string>

#include "agsfcos/parameters.hpp"
#include "agsfcos/tensor.hpp"

namespace agsfcos {

// Global-context attention block:
//   z = x + W_v2 * ReLU(LN(W_v1 * sum_j softmax_j(W_k * x) x_j))
// All transforms are 1x1 convolutions. W_v2 starts at zero so the block is
// the identity until trained.
struct GcBlockParams {
  Tensor w_k;          // [1,C,1,1] attention logits
  Tensor w_v1;         // [C/r,C,1,1]
  Tensor b_v1;         // [C/r]
  Tensor ln_gamma;     // [C/r]
  Tensor ln_beta;      // [C/r]
  Tensor w_v2;         // [C,C/r,1,1]
  Tensor b_v2;         // [C]
  std::size_t channels = 0;
  std::size_t ratio = 1;
};

// Throws ConfigError when `ratio` does not divide `channels`.
GcBlockParams make_gc_block(ParameterSet& params, const std::string& prefix,
                            std::size_t channels, std::size_t ratio, Rng& rng);

// Intermediate values of one forward pass, for inspection in tests.
struct GcTrace {
  Tensor attention;  // [N, H*W], each row sums to 1
  Tensor context;    // [N, C, 1, 1]
  Tensor update;     // [N, C, 1, 1], added at every position
};

Tensor gc_forward(const Tensor& x, const GcBlockParams& params,
                  GcTrace* trace = nullptr);

}  // namespace agsfcos
