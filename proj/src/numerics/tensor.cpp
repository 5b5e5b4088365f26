// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/numerics/tensor.h"

#include <algorithm>
#include <sstream>

#include "dptnet/error.h"

namespace dptnet {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (Index e : shape) {
    if (e < 1) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape) : s_(std::make_shared<Storage>()) {
  check_extents(shape);
  s_->data.assign(static_cast<std::size_t>(numel(shape)), T(0));
  s_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : s_(std::make_shared<Storage>()) {
  check_extents(shape);
  if (numel(shape) != static_cast<Index>(values.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->data.assign(values.begin(), values.end());
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.s_->data.begin(), t.s_->data.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::vector(std::initializer_list<T> values) {
  return Tensor(Shape{static_cast<Index>(values.size())}, std::vector<T>(values));
}

template <typename T>
Index Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return s_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (s_->data.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return s_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  s_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::release_grad() {
  AlignedVector<T>().swap(s_->grad);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(s_->shape, to_vector());
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace dptnet
