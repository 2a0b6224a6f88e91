#include "agsfcos/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "agsfcos/errors.hpp"

namespace agsfcos {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_no_grad = false;
thread_local Precision g_precision = Precision::kF64;

struct BackwardFault {
  std::string op;
  double factor = 1.0;
};
BackwardFault g_fault;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Precision active_precision() { return g_precision; }

PrecisionScope::PrecisionScope(Precision precision) : previous_(g_precision) {
  g_precision = precision;
}

PrecisionScope::~PrecisionScope() { g_precision = previous_; }

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), storage_(std::make_shared<detail::Storage>()) {
  storage_->data.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), storage_(std::make_shared<detail::Storage>()) {
  if (values.size() != shape_numel(shape_)) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) +
                         " values, got " + std::to_string(values.size()));
  }
  storage_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::numel() const {
  return storage_ ? storage_->data.size() : 0;
}

std::span<const double> Tensor::values() const {
  if (!storage_) return {};
  return storage_->data;
}

std::span<double> Tensor::mutable_values() {
  if (!storage_) return {};
  return storage_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str(shape_));
  }
  return storage_->data[0];
}

bool Tensor::requires_grad() const {
  return storage_ && storage_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!storage_) throw UsageError("set_requires_grad on undefined tensor");
  storage_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return storage_ && !storage_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!storage_) return {};
  return storage_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!storage_) return {};
  return storage_->grad;
}

Tensor Tensor::grad_tensor() const {
  if (!has_grad()) return Tensor(shape_, 0.0);
  return Tensor(shape_, storage_->grad);
}

void Tensor::zero_grad() {
  if (storage_) std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  if (!storage_) return {};
  return Tensor(shape_, storage_->data);
}

Tensor Tensor::clone() const { return detach(); }

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_no_grad ? nullptr : g_active_tape; }

void Tape::record(const Tensor& output, std::string_view op,
                  BackwardFn backward) {
  output.storage()->tape = this;
  entries_.push_back({output.storage(), std::string(op), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  if (loss.storage()->tape != this) {
    throw UsageError("backward: loss was not produced on this tape");
  }
  if (!std::isfinite(loss.item())) {
    throw NumericError("backward: loss is not finite");
  }
  for (auto& e : entries_) e.output->grad.clear();
  loss.storage()->grad.assign(1, 1.0);

  last_visit_order_.clear();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    Entry& e = entries_[i];
    if (e.output->grad.empty()) continue;
    last_visit_order_.push_back(i);
    e.backward(e.output->grad, e.output->data);
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.op);
  return names;
}

NoGradScope::NoGradScope() : previous_(g_no_grad) { g_no_grad = true; }

NoGradScope::~NoGradScope() { g_no_grad = previous_; }

namespace detail {

bool recording_enabled() { return Tape::active() != nullptr; }

std::span<double> grad_sink(const Tensor& t) {
  if (!t.requires_grad()) return {};
  auto& storage = *t.storage();
  if (storage.grad.empty()) storage.grad.assign(storage.data.size(), 0.0);
  return storage.grad;
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs,
                   std::string_view op, Tape::BackwardFn backward) {
  if (g_precision == Precision::kF32) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
  Tensor out(std::move(shape), std::move(values));
  Tape* tape = Tape::active();
  if (!tape) return out;
  const bool needs_grad = std::any_of(
      inputs.begin(), inputs.end(),
      [](const Tensor* t) { return t && t->requires_grad(); });
  if (needs_grad) {
    out.set_requires_grad(true);
    if (!g_fault.op.empty() && g_fault.op == op) {
      backward = [inner = std::move(backward), factor = g_fault.factor](
                     std::span<const double> g, std::span<const double> y) {
        std::vector<double> scaled(g.begin(), g.end());
        for (double& v : scaled) v *= factor;
        inner(scaled, y);
      };
    }
    tape->record(out, op, std::move(backward));
  }
  return out;
}

}  // namespace detail

namespace testing {

void inject_backward_fault(std::string op, double factor) {
  g_fault = {std::move(op), factor};
}

void clear_backward_fault() { g_fault = {}; }

}  // namespace testing

}  // namespace agsfcos
