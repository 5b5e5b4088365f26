// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "dptnet/numerics/tape.h"
#include "dptnet/numerics/tensor.h"

// Differentiable tensor operations. No broadcasting: operands must have
// identical shapes unless an operation states otherwise. Every function
// records its backward pass on the active Tape when an input requires grad.
namespace dptnet::ops {

// a[m x k] * b[k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Batched product a[B x m x k] * b[B x k x n], or a * b^T per batch item when
// transpose_b is set (b is then [B x n x k]).
template <typename T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

// x[..., in] * w[in x out] + bias[out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
// max(x, 0); the derivative at exactly 0 is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

// Activation patterns of successive relu calls on this thread. While a
// ReluPatternScope is active in kRecord mode every relu appends its active
// set; in kReplay mode relu consumes the recorded sets in call order and
// applies them instead of testing the sign. Finite-difference checks use this
// to stay on the linear piece that contains the evaluation point.
struct ReluPattern {
  std::vector<std::vector<bool>> masks;
  std::size_t cursor = 0;
};

class ReluPatternScope {
 public:
  enum class Mode { kRecord, kReplay };
  ReluPatternScope(ReluPattern* pattern, Mode mode);
  ~ReluPatternScope();
  ReluPatternScope(const ReluPatternScope&) = delete;
  ReluPatternScope& operator=(const ReluPatternScope&) = delete;

  static ReluPattern* active();
  static Mode mode();

 private:
  ReluPattern* previous_;
  Mode previous_mode_;
};

// Joins a and b along the last axis; leading extents must agree.
template <typename T>
Tensor<T> concat_lastdim(const Tensor<T>& a, const Tensor<T>& b);
// a[..., begin:begin+count].
template <typename T>
Tensor<T> slice_lastdim(const Tensor<T>& a, Index begin, Index count);

// 2-D transpose.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
// Output axis i is input axis axes[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes);

// Sum of all elements, as a rank-0 tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

// Softmax over the last axis with per-row max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a);

// Normalises over the trailing `norm_axes` axes (zero mean, unit variance),
// then applies per-feature gain and bias indexed by the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias,
                     int norm_axes, T eps = T(1e-5));

// Single-layer LSTM over x[B x l x in], gate order (input, forget, cell, output):
// w_ih[in x 4H], w_hh[H x 4H], bias[4H]. Zero initial state. With `reverse`
// the sequence is consumed from the last step to the first. Returns h[B x l x H].
template <typename T>
Tensor<T> lstm(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
               const Tensor<T>& bias, bool reverse = false);

// Elman cell h_t = tanh(x_t w_ih + h_{t-1} w_hh + bias); shapes as lstm with 1 gate.
template <typename T>
Tensor<T> rnn_tanh(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                   const Tensor<T>& bias, bool reverse = false);

}  // namespace dptnet::ops
