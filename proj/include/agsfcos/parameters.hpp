#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "agsfcos/tensor.hpp"

namespace agsfcos {

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;  // dotted path, e.g. "head.pconv0.w0"
  Tensor value;
};

// Registration-ordered set of named trainable tensors. Modules keep Tensor
// handles that share storage with the entries here.
class ParameterSet {
 public:
  // Throws ConfigError when the name is already taken.
  Tensor add(std::string name, Tensor initial);

  const std::vector<Parameter>& items() const { return items_; }
  std::vector<Parameter>& items() { return items_; }
  const Parameter* find(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  std::size_t total_elements() const;
  void zero_grad();

 private:
  std::vector<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);
// He-normal for a conv weight [K,C,kh,kw]: stddev sqrt(2 / (C*kh*kw)).
Tensor kaiming_conv_weight(Shape shape, Rng& rng);

}  // namespace agsfcos
