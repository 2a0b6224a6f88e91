#include "agsfcos/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "agsfcos/errors.hpp"

namespace agsfcos {

GradcheckResult gradcheck_leaves(const std::function<Tensor()>& loss_fn,
                                 std::span<Tensor> leaves, double h,
                                 std::size_t max_coords_per_leaf) {
  if (active_precision() != Precision::kF64) {
    throw UsageError("gradcheck requires 64-bit precision");
  }
  std::vector<bool> saved_flags;
  for (Tensor& leaf : leaves) {
    saved_flags.push_back(leaf.requires_grad());
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (Tensor& leaf : leaves) {
      auto g = leaf.grad();
      if (g.empty()) {
        analytic.emplace_back(leaf.numel(), 0.0);
      } else {
        analytic.emplace_back(g.begin(), g.end());
      }
    }
  }

  GradcheckResult result;
  NoGradScope no_grad;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_values();
    const std::size_t n = values.size();
    const std::size_t stride =
        (max_coords_per_leaf == 0 || n <= max_coords_per_leaf)
            ? 1
            : (n + max_coords_per_leaf - 1) / max_coords_per_leaf;
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = values[i];
      values[i] = original + h;
      const double up = loss_fn().item();
      values[i] = original - h;
      const double down = loss_fn().item();
      values[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("gradcheck: non-finite loss under perturbation");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[l][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.coords_checked;
    }
  }
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    leaves[l].zero_grad();
    leaves[l].set_requires_grad(saved_flags[l]);
  }
  return result;
}

double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                 double h) {
  Tensor input = x.clone();
  Tensor leaves[] = {input};
  return gradcheck_leaves([&] { return f(input); }, leaves, h).max_rel_error;
}

}  // namespace agsfcos
