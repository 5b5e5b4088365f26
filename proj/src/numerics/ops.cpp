// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/numerics/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "dptnet/error.h"
#include "eigen_maps.h"

namespace dptnet::ops {

using detail::ConstMatMap;
using detail::MatMap;

namespace {

template <typename T>
void require_rank(const Tensor<T>& a, int rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(a.shape()));
  }
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
Tensor<T> elementwise_binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, int kind) {
  require_same(a, b, name);
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  const std::size_t n = o.size();
  switch (kind) {
    case 0:
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[i];
      break;
    case 1:
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - y[i];
      break;
    default:
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * y[i];
      break;
  }
  record_op(out, {a, b}, [a, b, out, kind]() mutable {
    auto g = out.grad();
    const std::size_t n = g.size();
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      if (kind == 2) {
        auto y = b.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      if (kind == 2) {
        auto x = a.data();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * x[i];
      } else if (kind == 1) {
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    }
  });
  return out;
}

// out[i] = in[map[i]]; backward scatters through the same map.
template <typename T>
Tensor<T> gather(const Tensor<T>& a, Shape shape, std::shared_ptr<const std::vector<Index>> map) {
  Tensor<T> out(std::move(shape));
  auto o = out.mutable_data();
  auto x = a.data();
  const auto& m = *map;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[static_cast<std::size_t>(m[i])];
  record_op(out, {a}, [a, out, map]() mutable {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    const auto& m = *map;
    for (std::size_t i = 0; i < g.size(); ++i) ga[static_cast<std::size_t>(m[i])] += g[i];
  });
  return out;
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  MatMap<T>(out.mutable_data().data(), m, n).noalias() =
      ConstMatMap<T>(a.ptr(), m, k) * ConstMatMap<T>(b.ptr(), k, n);
  record_op(out, {a, b}, [a, b, out, m, k, n]() mutable {
    ConstMatMap<T> g(out.grad().data(), m, n);
    if (a.requires_grad()) {
      MatMap<T>(a.grad_buffer().data(), m, k).noalias() +=
          g * ConstMatMap<T>(b.ptr(), k, n).transpose();
    }
    if (b.requires_grad()) {
      MatMap<T>(b.grad_buffer().data(), k, n).noalias() +=
          ConstMatMap<T>(a.ptr(), m, k).transpose() * g;
    }
  });
  return out;
}

template <typename T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const bool ok = a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) &&
                  a.dim(2) == (transpose_b ? b.dim(2) : b.dim(1));
  if (!ok) {
    throw DimensionError("batched_matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()) + (transpose_b ? "^T" : ""));
  }
  const Index batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const Index n = transpose_b ? b.dim(1) : b.dim(2);
  Tensor<T> out({batch, m, n});
  T* o = out.mutable_data().data();
  for (Index i = 0; i < batch; ++i) {
    ConstMatMap<T> A(a.ptr() + i * m * k, m, k);
    MatMap<T> C(o + i * m * n, m, n);
    if (transpose_b) {
      C.noalias() = A * ConstMatMap<T>(b.ptr() + i * n * k, n, k).transpose();
    } else {
      C.noalias() = A * ConstMatMap<T>(b.ptr() + i * k * n, k, n);
    }
  }
  record_op(out, {a, b}, [a, b, out, batch, m, k, n, transpose_b]() mutable {
    const T* g = out.grad().data();
    T* ga = a.requires_grad() ? a.grad_buffer().data() : nullptr;
    T* gb = b.requires_grad() ? b.grad_buffer().data() : nullptr;
    for (Index i = 0; i < batch; ++i) {
      ConstMatMap<T> G(g + i * m * n, m, n);
      ConstMatMap<T> A(a.ptr() + i * m * k, m, k);
      if (transpose_b) {
        ConstMatMap<T> B(b.ptr() + i * n * k, n, k);
        if (ga) MatMap<T>(ga + i * m * k, m, k).noalias() += G * B;
        if (gb) MatMap<T>(gb + i * n * k, n, k).noalias() += G.transpose() * A;
      } else {
        ConstMatMap<T> B(b.ptr() + i * k * n, k, n);
        if (ga) MatMap<T>(ga + i * m * k, m, k).noalias() += G * B.transpose();
        if (gb) MatMap<T>(gb + i * k * n, k, n).noalias() += A.transpose() * G;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const Index in = w.dim(0), out_dim = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  const Index rows = x.size() / in;
  Shape shape = x.shape();
  shape.back() = out_dim;
  Tensor<T> out(shape);
  MatMap<T> Y(out.mutable_data().data(), rows, out_dim);
  Y.noalias() = ConstMatMap<T>(x.ptr(), rows, in) * ConstMatMap<T>(w.ptr(), in, out_dim);
  if (bias.defined()) Y.rowwise() += detail::ConstRowVecMap<T>(bias.ptr(), out_dim);
  auto backward = [x, w, bias, out, rows, in, out_dim]() mutable {
    ConstMatMap<T> G(out.grad().data(), rows, out_dim);
    if (x.requires_grad()) {
      MatMap<T>(x.grad_buffer().data(), rows, in).noalias() +=
          G * ConstMatMap<T>(w.ptr(), in, out_dim).transpose();
    }
    if (w.requires_grad()) {
      MatMap<T>(w.grad_buffer().data(), in, out_dim).noalias() +=
          ConstMatMap<T>(x.ptr(), rows, in).transpose() * G;
    }
    if (bias.defined() && bias.requires_grad()) {
      detail::RowVecMap<T>(bias.grad_buffer().data(), out_dim) += G.colwise().sum();
    }
  };
  if (bias.defined()) {
    record_op(out, {x, w, bias}, backward);
  } else {
    record_op(out, {x, w}, backward);
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary(a, b, "add", 0);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary(a, b, "sub", 1);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary(a, b, "mul", 2);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  record_op(out, {a}, [a, out, factor]() mutable {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

namespace {

struct ReluSlot {
  ReluPattern* pattern = nullptr;
  ReluPatternScope::Mode mode = ReluPatternScope::Mode::kRecord;
};

ReluSlot& relu_slot() {
  thread_local ReluSlot slot;
  return slot;
}

}  // namespace

ReluPatternScope::ReluPatternScope(ReluPattern* pattern, Mode mode)
    : previous_(relu_slot().pattern), previous_mode_(relu_slot().mode) {
  if (pattern != nullptr) pattern->cursor = 0;
  relu_slot() = {pattern, mode};
}

ReluPatternScope::~ReluPatternScope() { relu_slot() = {previous_, previous_mode_}; }

ReluPattern* ReluPatternScope::active() { return relu_slot().pattern; }

ReluPatternScope::Mode ReluPatternScope::mode() { return relu_slot().mode; }

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto x = a.data();
  auto mask = std::make_shared<std::vector<bool>>(x.size());
  ReluPattern* pattern = ReluPatternScope::active();
  if (pattern != nullptr && ReluPatternScope::mode() == ReluPatternScope::Mode::kReplay) {
    if (pattern->cursor >= pattern->masks.size() ||
        pattern->masks[pattern->cursor].size() != x.size()) {
      throw ContractError("relu: replayed activation pattern does not match call " +
                          std::to_string(pattern->cursor));
    }
    *mask = pattern->masks[pattern->cursor++];
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) (*mask)[i] = x[i] > T(0);
    if (pattern != nullptr) pattern->masks.push_back(*mask);
  }
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (*mask)[i] ? x[i] : T(0);
  record_op(out, {a}, [a, out, mask]() mutable {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*mask)[i]) ga[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> concat_lastdim(const Tensor<T>& a, const Tensor<T>& b) {
  const bool ok = a.rank() == b.rank() && a.rank() >= 1 &&
                  std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin());
  if (!ok) {
    throw DimensionError("concat_lastdim: cannot join " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Index na = a.dim(-1), nb = b.dim(-1), rows = a.size() / na;
  Shape shape = a.shape();
  shape.back() = na + nb;
  Tensor<T> out(shape);
  T* o = out.mutable_data().data();
  for (Index r = 0; r < rows; ++r) {
    std::copy_n(a.ptr() + r * na, na, o + r * (na + nb));
    std::copy_n(b.ptr() + r * nb, nb, o + r * (na + nb) + na);
  }
  record_op(out, {a, b}, [a, b, out, na, nb, rows]() mutable {
    const T* g = out.grad().data();
    if (a.requires_grad()) {
      T* ga = a.grad_buffer().data();
      for (Index r = 0; r < rows; ++r)
        for (Index j = 0; j < na; ++j) ga[r * na + j] += g[r * (na + nb) + j];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_buffer().data();
      for (Index r = 0; r < rows; ++r)
        for (Index j = 0; j < nb; ++j) gb[r * nb + j] += g[r * (na + nb) + na + j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice_lastdim(const Tensor<T>& a, Index begin, Index count) {
  if (a.rank() < 1 || begin < 0 || count < 1 || begin + count > a.dim(-1)) {
    throw DimensionError("slice_lastdim: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(a.shape()));
  }
  const Index width = a.dim(-1), rows = a.size() / width;
  Shape shape = a.shape();
  shape.back() = count;
  auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(rows * count));
  for (Index r = 0; r < rows; ++r)
    for (Index j = 0; j < count; ++j) (*map)[r * count + j] = r * width + begin + j;
  return gather(a, std::move(shape), std::shared_ptr<const std::vector<Index>>(map));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  return permute(a, {1, 0});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), a.to_vector());
  record_op(out, {a}, [a, out]() mutable {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
  const int r = a.rank();
  std::vector<int> seen(axes);
  std::sort(seen.begin(), seen.end());
  std::vector<int> expect(static_cast<std::size_t>(r));
  std::iota(expect.begin(), expect.end(), 0);
  if (seen != expect) {
    throw DimensionError("permute: axes are not a permutation of the " + std::to_string(r) +
                         " axes of " + shape_str(a.shape()));
  }
  const Shape& in_shape = a.shape();
  std::vector<Index> in_stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<Index> step(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    step[i] = in_stride[axes[i]];
  }
  auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(a.size()));
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  Index offset = 0;
  for (auto& m : *map) {
    m = offset;
    for (int i = r - 1; i >= 0; --i) {
      offset += step[i];
      if (++idx[i] < out_shape[i]) break;
      offset -= step[i] * out_shape[i];
      idx[i] = 0;
    }
  }
  return gather(a, std::move(out_shape), std::shared_ptr<const std::vector<Index>>(map));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total);
  record_op(out, {a}, [a, out]() mutable {
    const T g = out.grad()[0];
    for (T& v : a.grad_buffer()) v += g;
  });
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("softmax_rows: needs at least one axis");
  const Index n = a.dim(-1), rows = a.size() / n;
  Tensor<T> out(a.shape());
  T* o = out.mutable_data().data();
  for (Index r = 0; r < rows; ++r) {
    detail::ConstRowVecMap<T> x(a.ptr() + r * n, n);
    detail::RowVecMap<T> y(o + r * n, n);
    y.array() = (x.array() - x.maxCoeff()).exp();
    y /= y.sum();
  }
  record_op(out, {a}, [a, out, n, rows]() mutable {
    const T* g = out.grad().data();
    const T* y = out.ptr();
    T* ga = a.grad_buffer().data();
    for (Index r = 0; r < rows; ++r) {
      T dot = T(0);
      for (Index j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (Index j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias,
                     int norm_axes, T eps) {
  if (norm_axes < 1 || norm_axes > a.rank()) {
    throw DimensionError("layer_norm: cannot normalise over " + std::to_string(norm_axes) +
                         " trailing axes of " + shape_str(a.shape()));
  }
  const Index d = a.dim(-1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " must have extent " + std::to_string(d));
  }
  Index group = 1;
  for (int i = a.rank() - norm_axes; i < a.rank(); ++i) group *= a.dim(i);
  const Index groups = a.size() / group;

  Tensor<T> out(a.shape());
  auto xhat = std::make_shared<AlignedVector<T>>(static_cast<std::size_t>(a.size()));
  auto inv_std = std::make_shared<AlignedVector<T>>(static_cast<std::size_t>(groups));
  const T* x = a.ptr();
  T* y = out.mutable_data().data();
  const T* gm = gain.ptr();
  const T* bs = bias.ptr();
  for (Index gi = 0; gi < groups; ++gi) {
    const Index base = gi * group;
    T mean = T(0);
    for (Index j = 0; j < group; ++j) mean += x[base + j];
    mean /= T(group);
    T var = T(0);
    for (Index j = 0; j < group; ++j) {
      const T c = x[base + j] - mean;
      var += c * c;
    }
    var /= T(group);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[gi] = inv;
    for (Index j = 0; j < group; ++j) {
      const T h = (x[base + j] - mean) * inv;
      (*xhat)[base + j] = h;
      y[base + j] = h * gm[j % d] + bs[j % d];
    }
  }
  record_op(out, {a, gain, bias}, [a, gain, bias, out, xhat, inv_std, group, groups, d]() mutable {
    const T* g = out.grad().data();
    const auto& h = *xhat;
    if (gain.requires_grad() || bias.requires_grad()) {
      T* gg = gain.requires_grad() ? gain.grad_buffer().data() : nullptr;
      T* gb = bias.requires_grad() ? bias.grad_buffer().data() : nullptr;
      for (Index i = 0; i < groups * group; ++i) {
        const Index f = (i % group) % d;
        if (gg) gg[f] += g[i] * h[i];
        if (gb) gb[f] += g[i];
      }
    }
    if (a.requires_grad()) {
      T* ga = a.grad_buffer().data();
      const T* gm = gain.ptr();
      for (Index gi = 0; gi < groups; ++gi) {
        const Index base = gi * group;
        T mean_dh = T(0), mean_dh_h = T(0);
        for (Index j = 0; j < group; ++j) {
          const T dh = g[base + j] * gm[j % d];
          mean_dh += dh;
          mean_dh_h += dh * h[base + j];
        }
        mean_dh /= T(group);
        mean_dh_h /= T(group);
        const T inv = (*inv_std)[gi];
        for (Index j = 0; j < group; ++j) {
          const T dh = g[base + j] * gm[j % d];
          ga[base + j] += inv * (dh - mean_dh - h[base + j] * mean_dh_h);
        }
      }
    }
  });
  return out;
}

namespace {

struct RecurrentShape {
  Index batch, steps, in, hidden;
};

template <typename T>
RecurrentShape check_recurrent(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                               const Tensor<T>& bias, Index gates, const char* op) {
  if (x.rank() != 3 || w_ih.rank() != 2 || w_hh.rank() != 2 || bias.rank() != 1) {
    throw DimensionError(std::string(op) + ": expected x[B x l x in], w_ih, w_hh and bias, got " +
                         shape_str(x.shape()) + ", " + shape_str(w_ih.shape()) + ", " +
                         shape_str(w_hh.shape()) + ", " + shape_str(bias.shape()));
  }
  const Index hidden = w_hh.dim(0);
  if (w_ih.dim(0) != x.dim(2) || w_ih.dim(1) != gates * hidden || w_hh.dim(1) != gates * hidden ||
      bias.dim(0) != gates * hidden) {
    throw DimensionError(std::string(op) + ": inconsistent weights " + shape_str(w_ih.shape()) +
                         ", " + shape_str(w_hh.shape()) + ", " + shape_str(bias.shape()) +
                         " for input " + shape_str(x.shape()));
  }
  return {x.dim(0), x.dim(1), x.dim(2), hidden};
}

// Accumulates input, weight and bias gradients of a recurrent layer from the
// pre-activation gradients `dpre` [B*l x G] and the previous hidden states.
template <typename T>
void recurrent_param_grads(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                           const Tensor<T>& bias,
                           const RecurrentShape& s, Index width, const AlignedVector<T>& dpre,
                           const AlignedVector<T>& h_prev) {
  const Index rows = s.batch * s.steps;
  ConstMatMap<T> dA(dpre.data(), rows, width);
  if (x.requires_grad()) {
    MatMap<T>(x.grad_buffer().data(), rows, s.in).noalias() +=
        dA * ConstMatMap<T>(w_ih.ptr(), s.in, width).transpose();
  }
  if (w_ih.requires_grad()) {
    MatMap<T>(w_ih.grad_buffer().data(), s.in, width).noalias() +=
        ConstMatMap<T>(x.ptr(), rows, s.in).transpose() * dA;
  }
  if (w_hh.requires_grad()) {
    MatMap<T>(w_hh.grad_buffer().data(), s.hidden, width).noalias() +=
        ConstMatMap<T>(h_prev.data(), rows, s.hidden).transpose() * dA;
  }
  if (bias.requires_grad()) {
    detail::RowVecMap<T>(bias.grad_buffer().data(), width) += dA.colwise().sum();
  }
}

// Hidden state feeding step t (zero at the first step), laid out like h.
template <typename T>
AlignedVector<T> shifted_hidden(const T* h, const RecurrentShape& s, bool reverse) {
  AlignedVector<T> prev(static_cast<std::size_t>(s.batch * s.steps * s.hidden), T(0));
  for (Index b = 0; b < s.batch; ++b) {
    for (Index t = 0; t < s.steps; ++t) {
      const Index src = reverse ? t + 1 : t - 1;
      if (src < 0 || src >= s.steps) continue;
      std::copy_n(h + (b * s.steps + src) * s.hidden, s.hidden,
                  prev.data() + (b * s.steps + t) * s.hidden);
    }
  }
  return prev;
}

}  // namespace

template <typename T>
Tensor<T> lstm(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
               const Tensor<T>& bias, bool reverse) {
  const RecurrentShape s = check_recurrent(x, w_ih, w_hh, bias, 4, "lstm");
  const Index B = s.batch, L = s.steps, H = s.hidden, G = 4 * H;
  using detail::ConstStridedMap;
  using detail::StridedMap;
  using Stride = Eigen::OuterStride<>;

  // Gate activations [B x l x 4H] and cell states [B x l x H], kept for backward.
  auto act = std::make_shared<AlignedVector<T>>(static_cast<std::size_t>(B * L * G));
  auto cell = std::make_shared<AlignedVector<T>>(static_cast<std::size_t>(B * L * H));
  MatMap<T> pre(act->data(), B * L, G);
  pre.noalias() = ConstMatMap<T>(x.ptr(), B * L, s.in) * ConstMatMap<T>(w_ih.ptr(), s.in, G);
  pre.rowwise() += detail::ConstRowVecMap<T>(bias.ptr(), G);

  Tensor<T> out({B, L, H});
  T* h = out.mutable_data().data();
  ConstMatMap<T> Whh(w_hh.ptr(), H, G);
  for (Index step = 0; step < L; ++step) {
    const Index t = reverse ? L - 1 - step : step;
    const Index tp = reverse ? t + 1 : t - 1;
    StridedMap<T> gates(act->data() + t * G, B, G, Stride(L * G));
    if (step > 0) gates.noalias() += ConstStridedMap<T>(h + tp * H, B, H, Stride(L * H)) * Whh;
    auto ig = gates.leftCols(H).array();
    auto fg = gates.middleCols(H, H).array();
    auto cg = gates.middleCols(2 * H, H).array();
    auto og = gates.rightCols(H).array();
    ig = (T(1) + (-ig).exp()).inverse();
    fg = (T(1) + (-fg).exp()).inverse();
    cg = cg.tanh();
    og = (T(1) + (-og).exp()).inverse();
    StridedMap<T> ct(cell->data() + t * H, B, H, Stride(L * H));
    if (step > 0) {
      ct.array() = ig * cg + fg * ConstStridedMap<T>(cell->data() + tp * H, B, H, Stride(L * H)).array();
    } else {
      ct.array() = ig * cg;
    }
    StridedMap<T>(h + t * H, B, H, Stride(L * H)).array() = og * ct.array().tanh();
  }

  record_op(out, {x, w_ih, w_hh, bias}, [x, w_ih, w_hh, bias, out, act, cell, s, reverse]() mutable {
    const Index B = s.batch, L = s.steps, H = s.hidden, G = 4 * H;
    using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const T* gout = out.grad().data();
    AlignedVector<T> dpre(static_cast<std::size_t>(B * L * G), T(0));
    Arr dh_next = Arr::Zero(B, H), dc_next = Arr::Zero(B, H);
    Arr dh(B, H), dc(B, H), tc(B, H);
    ConstMatMap<T> Whh(w_hh.ptr(), H, G);
    for (Index step = L - 1; step >= 0; --step) {
      const Index t = reverse ? L - 1 - step : step;
      const Index tp = reverse ? t + 1 : t - 1;
      ConstStridedMap<T> gates(act->data() + t * G, B, G, Stride(L * G));
      const auto ig = gates.leftCols(H).array();
      const auto fg = gates.middleCols(H, H).array();
      const auto cg = gates.middleCols(2 * H, H).array();
      const auto og = gates.rightCols(H).array();
      StridedMap<T> da(dpre.data() + t * G, B, G, Stride(L * G));
      tc = ConstStridedMap<T>(cell->data() + t * H, B, H, Stride(L * H)).array().tanh();
      dh = ConstStridedMap<T>(gout + t * H, B, H, Stride(L * H)).array() + dh_next;
      dc = dh * og * (T(1) - tc * tc) + dc_next;
      da.leftCols(H).array() = dc * cg * ig * (T(1) - ig);
      if (step > 0) {
        da.middleCols(H, H).array() =
            dc * ConstStridedMap<T>(cell->data() + tp * H, B, H, Stride(L * H)).array() * fg *
            (T(1) - fg);
      } else {
        da.middleCols(H, H).setZero();
      }
      da.middleCols(2 * H, H).array() = dc * ig * (T(1) - cg * cg);
      da.rightCols(H).array() = dh * tc * og * (T(1) - og);
      dc_next = dc * fg;
      if (step > 0) dh_next.matrix().noalias() = da * Whh.transpose();
    }
    const AlignedVector<T> h_prev = shifted_hidden(out.ptr(), s, reverse);
    recurrent_param_grads(x, w_ih, w_hh, bias, s, G, dpre, h_prev);
  });
  return out;
}

template <typename T>
Tensor<T> rnn_tanh(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                   const Tensor<T>& bias, bool reverse) {
  const RecurrentShape s = check_recurrent(x, w_ih, w_hh, bias, 1, "rnn_tanh");
  const Index B = s.batch, L = s.steps, H = s.hidden;
  using detail::ConstStridedMap;
  using detail::StridedMap;

  Tensor<T> out({B, L, H});
  T* h = out.mutable_data().data();
  MatMap<T> pre(h, B * L, H);
  pre.noalias() = ConstMatMap<T>(x.ptr(), B * L, s.in) * ConstMatMap<T>(w_ih.ptr(), s.in, H);
  pre.rowwise() += detail::ConstRowVecMap<T>(bias.ptr(), H);
  ConstMatMap<T> Whh(w_hh.ptr(), H, H);
  for (Index step = 0; step < L; ++step) {
    const Index t = reverse ? L - 1 - step : step;
    const Index tp = reverse ? t + 1 : t - 1;
    StridedMap<T> ht(h + t * H, B, H, Eigen::OuterStride<>(L * H));
    if (step > 0) {
      ht.noalias() += ConstStridedMap<T>(h + tp * H, B, H, Eigen::OuterStride<>(L * H)) * Whh;
    }
    ht = ht.array().tanh();
  }

  record_op(out, {x, w_ih, w_hh, bias}, [x, w_ih, w_hh, bias, out, s, reverse]() mutable {
    const Index B = s.batch, L = s.steps, H = s.hidden;
    const T* gout = out.grad().data();
    const T* h = out.ptr();
    AlignedVector<T> dpre(static_cast<std::size_t>(B * L * H), T(0));
    AlignedVector<T> dh_next(static_cast<std::size_t>(B * H), T(0));
    ConstMatMap<T> Whh(w_hh.ptr(), H, H);
    for (Index step = L - 1; step >= 0; --step) {
      const Index t = reverse ? L - 1 - step : step;
      for (Index b = 0; b < B; ++b) {
        for (Index j = 0; j < H; ++j) {
          const Index k = (b * L + t) * H + j;
          const T dh = gout[k] + dh_next[b * H + j];
          dpre[k] = dh * (T(1) - h[k] * h[k]);
        }
      }
      if (step > 0) {
        MatMap<T>(dh_next.data(), B, H).noalias() =
            detail::ConstStridedMap<T>(dpre.data() + t * H, B, H, Eigen::OuterStride<>(L * H)) *
            Whh.transpose();
      }
    }
    const AlignedVector<T> h_prev = shifted_hidden(h, s, reverse);
    recurrent_param_grads(x, w_ih, w_hh, bias, s, H, dpre, h_prev);
  });
  return out;
}

#define DPTNET_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> batched_matmul(const Tensor<T>&, const Tensor<T>&, bool);                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> concat_lastdim(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> slice_lastdim(const Tensor<T>&, Index, Index);                             \
  template Tensor<T> transpose(const Tensor<T>&);                                               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                        \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, T);  \
  template Tensor<T> lstm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                          const Tensor<T>&, bool);                                              \
  template Tensor<T> rnn_tanh(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                              const Tensor<T>&, bool);

DPTNET_INSTANTIATE_OPS(float)
DPTNET_INSTANTIATE_OPS(double)

}  // namespace dptnet::ops
