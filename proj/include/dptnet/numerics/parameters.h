// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dptnet/numerics/tensor.h"

namespace dptnet {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedTensor<T>>;

template <typename T>
Index count_elements(const ParameterList<T>& params) {
  Index total = 0;
  for (const auto& p : params) total += p.tensor.size();
  return total;
}

template <typename T>
void zero_grads(const ParameterList<T>& params) {
  for (const auto& p : params) {
    auto t = p.tensor;
    t.zero_grad();
  }
}

using Rng = std::mt19937_64;

// Uniform draw in [lo, hi) built from the raw 64-bit engine output so the
// stream is identical across standard library implementations.
inline double uniform(Rng& rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

// Parameter leaf filled with U(-bound, bound).
template <typename T>
Tensor<T> uniform_parameter(const Shape& shape, double bound, Rng& rng) {
  Tensor<T> t(shape);
  for (T& v : t.mutable_data()) v = static_cast<T>(uniform(rng, -bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> constant_parameter(const Shape& shape, T value) {
  Tensor<T> t = Tensor<T>::full(shape, value);
  t.set_requires_grad(true);
  return t;
}

}  // namespace dptnet
