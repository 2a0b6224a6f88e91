#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agsfcos {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Arithmetic precision of op outputs. kF32 rounds every produced value
// through float; storage itself is always double.
enum class Precision { kF64, kF32 };

Precision active_precision();

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision precision);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

class Tape;

namespace detail {

struct Storage {
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  const Tape* tape = nullptr;  // set when produced by a recorded op
};

}  // namespace detail

// Dense row-major array of doubles. Copies share storage; values are
// treated as immutable once an op has produced them. Leaves (parameters,
// gradcheck inputs) may be edited in place through mutable_values().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  bool defined() const noexcept { return storage_ != nullptr; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat) const { return storage_->data[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  Tensor grad_tensor() const;
  void zero_grad();

  // Fresh storage, no gradient tracking.
  Tensor detach() const;
  Tensor clone() const;
  bool shares_storage(const Tensor& other) const {
    return storage_ == other.storage_;
  }

  const std::shared_ptr<detail::Storage>& storage() const { return storage_; }

 private:
  Shape shape_;
  std::shared_ptr<detail::Storage> storage_;
};

// Ordered record of executed primitives. Constructing a Tape makes it the
// active recorder for the current thread until it is destroyed; ops whose
// inputs require gradients append an entry. Without an active tape ops run
// in inference mode and build no graph.
class Tape {
 public:
  // Receives d(loss)/d(output) and the output's own values.
  using BackwardFn = std::function<void(std::span<const double> grad_out,
                                        std::span<const double> out)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(const Tensor& output, std::string_view op, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and walks the entries in reverse execution
  // order. Intermediate gradients are reset first; leaf gradients
  // accumulate across calls.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> op_names() const;
  // Entry indices visited by the most recent backward, in visit order.
  const std::vector<std::size_t>& last_visit_order() const {
    return last_visit_order_;
  }

 private:
  struct Entry {
    std::shared_ptr<detail::Storage> output;
    std::string op;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  std::vector<std::size_t> last_visit_order_;
  Tape* previous_ = nullptr;
};

// Disables recording on this thread for its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

namespace detail {

bool recording_enabled();

// Returns the gradient buffer of `t`, allocating zeros on first use, or an
// empty span when `t` does not require gradients.
std::span<double> grad_sink(const Tensor& t);

// Rounds per the active precision, checks finiteness, and records the op on
// the active tape when any input requires gradients.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs,
                   std::string_view op, Tape::BackwardFn backward);

}  // namespace detail

namespace testing {

// Scales the gradient flowing into every op named `op` by `factor`.
// Used to verify that gradient checking catches a broken backward.
void inject_backward_fault(std::string op, double factor);
void clear_backward_fault();

}  // namespace testing

}  // namespace agsfcos
