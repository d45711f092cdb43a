#include "nwq/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "nwq/error.hpp"

namespace nwq {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor() : s_(std::make_shared<Storage>()) {
  s_->shape = {0};
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= s_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(s_->shape));
  }
  return s_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (s_->values.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(s_->shape));
  }
  return s_->values[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
  if (!s_->grad_allocated) {
    s_->grad.assign(s_->values.size(), T(0));
    s_->grad_allocated = true;
  }
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  s_->grad.clear();
  s_->grad_allocated = false;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(s_->shape, s_->values, s_->requires_grad);
}

template <typename T>
bool Tape<T>::wants(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!recording_) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void Tape<T>::record(std::vector<Tensor<T>> inputs, Tensor<T>& output, BackwardFn fn) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(inputs), output, std::move(fn)});
}

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (auto& node : tape.nodes_) node.output.zero_grad();
  Tensor<T> seed = loss;
  seed.grad_buffer()[0] += T(1);
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->fn(it->output);
  }
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&, Tape<float>&);
template void backward<double>(const Tensor<double>&, Tape<double>&);
template void check_finite<float>(const Tensor<float>&, const char*);
template void check_finite<double>(const Tensor<double>&, const char*);

}  // namespace nwq
