// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dptnet/numerics/aligned.h"

namespace dptnet {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array with an optional gradient slot.
//
// Tensor is a shared handle: copies alias the same storage, which is how
// parameters are shared between the model, the optimizer and a Tape. Values
// produced by operations are never modified afterwards; only leaves
// (parameters, inputs under test) are written through mutable_data().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{}, {value}); }
  // 1-D tensor from a literal list.
  static Tensor vector(std::initializer_list<T> values);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return static_cast<Index>(s_->data.size()); }

  std::span<const T> data() const { return s_->data; }
  std::span<T> mutable_data() { return s_->data; }
  const T* ptr() const { return s_->data.data(); }
  T operator[](Index i) const { return s_->data[static_cast<std::size_t>(i)]; }
  // Value of a single-element tensor.
  T item() const;
  std::vector<T> to_vector() const { return {s_->data.begin(), s_->data.end()}; }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return s_ && !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  // Gradient storage, zero-initialised on first use. The gradient slot is
  // not part of the value, so it is reachable through const handles.
  std::span<T> grad_buffer() const;
  void zero_grad();
  void release_grad();

  // Fresh storage holding a copy of the values; never requires grad.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    AlignedVector<T> data;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dptnet
