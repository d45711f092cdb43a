#pragma once

// Dense row-major tensors and a reverse-mode gradient tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is what lets the
// tape hand gradients back to the tensors the caller holds. Values are treated as
// immutable once an op has produced them; only parameters are updated in place, and
// only by the optimizer. The engine is instantiated for float (training) and double
// (gradient verification).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nwq {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class Tensor {
 public:
  using value_type = T;

  /// Empty rank-1 tensor of size 0.
  Tensor();
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return s_->values.size(); }

  std::span<const T> values() const { return s_->values; }
  /// In-place access for parameter initialization and optimizer updates.
  std::span<T> mutable_values() { return s_->values; }
  T item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool flag) { s_->requires_grad = flag; }

  bool has_grad() const { return s_->grad_allocated; }
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const T> grad() const { return s_->grad; }
  /// Gradient buffer, allocated as zeros on first use.
  std::span<T> grad_buffer() const;
  void zero_grad();

  /// Deep copy with no gradient.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool grad_allocated = false;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Append-only record of differentiable operations.
///
/// Ops record a node only when the tape is recording and at least one input requires
/// a gradient; the output then requires a gradient as well. Nodes are appended in
/// execution order, so every node's inputs were produced before it.
template <typename T>
class Tape {
 public:
  /// Backward rule: reads out.grad() and accumulates into the captured inputs.
  using BackwardFn = std::function<void(const Tensor<T>& out)>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// True when an op with these inputs must be recorded.
  bool wants(std::initializer_list<const Tensor<T>*> inputs) const;

  void record(std::vector<Tensor<T>> inputs, Tensor<T>& output, BackwardFn fn);

  template <typename U>
  friend void backward(const Tensor<U>& loss, Tape<U>& tape);

 private:
  struct Node {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn fn;
  };
  bool recording_;
  std::vector<Node> nodes_;
};

/// Propagates d(loss)/d(.) through the tape.
///
/// Gradients of intermediate tensors are reset on every call; gradients of leaf
/// tensors (parameters, inputs) accumulate across calls until zero_grad().
/// Throws ContractError when loss holds more than one element.
template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape);

/// Throws NumericError naming `op` if any value is NaN or infinite.
template <typename T>
void check_finite(const Tensor<T>& t, const char* op);

/// Element-type conversion (float <-> double). Copies the requires_grad flag, not the gradient.
template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  auto src = t.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Tensor<To>(t.shape(), std::move(out), t.requires_grad());
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace nwq
