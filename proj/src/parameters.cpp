#include "agsfcos/parameters.hpp"

#include <cmath>

#include "agsfcos/errors.hpp"

namespace agsfcos {

Tensor ParameterSet::add(std::string name, Tensor initial) {
  if (index_.contains(name)) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  initial.set_requires_grad(true);
  index_.emplace(name, items_.size());
  items_.push_back({std::move(name), initial});
  return initial;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second];
}

std::size_t ParameterSet::total_elements() const {
  std::size_t total = 0;
  for (const auto& p : items_) total += p.value.numel();
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.value.zero_grad();
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values));
}

Tensor kaiming_conv_weight(Shape shape, Rng& rng) {
  const std::size_t fan_in = shape.at(1) * shape.at(2) * shape.at(3);
  return normal_tensor(std::move(shape),
                       std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

}  // namespace agsfcos
