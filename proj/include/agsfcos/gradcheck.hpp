#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "agsfcos/tensor.hpp"

namespace agsfcos {

inline constexpr double kGradcheckStep = 1e-5;

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar function of one tensor. Requires 64-bit precision.
double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                 double h = kGradcheckStep);

// Same measure for a loss that reads the given leaf tensors (parameters or
// inputs), which are perturbed in place and restored. When
// max_coords_per_leaf is nonzero, an evenly strided subset of each leaf's
// coordinates is checked.
GradcheckResult gradcheck_leaves(const std::function<Tensor()>& loss_fn,
                                 std::span<Tensor> leaves,
                                 double h = kGradcheckStep,
                                 std::size_t max_coords_per_leaf = 0);

}  // namespace agsfcos
