// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/frames.h"

#include <string>
#include <vector>

#include "dptnet/error.h"
#include "dptnet/numerics/ops.h"
#include "dptnet/numerics/tape.h"

namespace dptnet {

FrameLayout plan_frames(Index signal_len, Index frame_len, Index hop) {
  if (signal_len < 1) throw ContractError("frame: empty waveform");
  if (frame_len < 1 || hop < 1 || hop > frame_len) {
    throw ContractError("frame: need frame_len >= 1 and 1 <= hop <= frame_len, got frame_len=" +
                        std::to_string(frame_len) + " hop=" + std::to_string(hop));
  }
  FrameLayout layout;
  layout.frame_len = frame_len;
  layout.hop = hop;
  layout.signal_len = signal_len;
  const Index rest = signal_len > frame_len ? signal_len - frame_len : 0;
  layout.num_frames = (rest + hop - 1) / hop + 1;
  return layout;
}

template <typename T>
FrameMatrix<T> frame(const Tensor<T>& signal, Index frame_len, Index hop) {
  if (!signal.defined()) throw ContractError("frame: empty waveform");
  if (signal.rank() != 1) {
    throw DimensionError("frame: expected a 1-D signal, got " + shape_str(signal.shape()));
  }
  const FrameLayout layout = plan_frames(signal.size(), frame_len, hop);
  const Index L = layout.frame_len, I = layout.num_frames, n = layout.signal_len;
  Tensor<T> frames({L, I});
  T* f = frames.mutable_data().data();
  const T* x = signal.ptr();
  for (Index l = 0; l < L; ++l) {
    for (Index i = 0; i < I; ++i) {
      const Index t = i * hop + l;
      f[l * I + i] = t < n ? x[t] : T(0);
    }
  }
  record_op(frames, {signal}, [signal, frames, L, I, hop, n]() mutable {
    const T* g = frames.grad().data();
    T* gx = signal.grad_buffer().data();
    for (Index l = 0; l < L; ++l) {
      for (Index i = 0; i < I; ++i) {
        const Index t = i * hop + l;
        if (t < n) gx[t] += g[l * I + i];
      }
    }
  });
  return {frames, layout};
}

template <typename T>
Tensor<T> overlap_add(const FrameMatrix<T>& frames, bool normalize) {
  const FrameLayout& layout = frames.layout;
  const Index L = layout.frame_len, I = layout.num_frames, hop = layout.hop;
  const Index n = layout.signal_len;
  if (frames.frames.shape() != Shape{L, I}) {
    throw DimensionError("overlap_add: frames " + shape_str(frames.frames.shape()) +
                         " do not match layout [" + std::to_string(L) + "x" + std::to_string(I) +
                         "]");
  }
  // Per-sample weight: 1 or 1/coverage.
  std::vector<T> weight(static_cast<std::size_t>(n), T(1));
  if (normalize) {
    std::vector<Index> count(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < I; ++i)
      for (Index l = 0; l < L; ++l)
        if (i * hop + l < n) ++count[i * hop + l];
    for (Index t = 0; t < n; ++t) weight[t] = T(1) / T(count[t]);
  }
  Tensor<T> out({n});
  T* y = out.mutable_data().data();
  const T* f = frames.frames.ptr();
  for (Index l = 0; l < L; ++l) {
    for (Index i = 0; i < I; ++i) {
      const Index t = i * hop + l;
      if (t < n) y[t] += f[l * I + i];
    }
  }
  for (Index t = 0; t < n; ++t) y[t] *= weight[t];
  const Tensor<T> src = frames.frames;
  record_op(out, {src}, [src, out, weight, L, I, hop, n]() mutable {
    const T* g = out.grad().data();
    T* gf = src.grad_buffer().data();
    for (Index l = 0; l < L; ++l) {
      for (Index i = 0; i < I; ++i) {
        const Index t = i * hop + l;
        if (t < n) gf[l * I + i] += g[t] * weight[t];
      }
    }
  });
  return out;
}

namespace {

template <typename T>
Tensor<T> filter_frames(const FrameMatrix<T>& frames, const Tensor<T>& filters, const char* op) {
  if (filters.rank() != 2 || filters.dim(1) != frames.layout.frame_len) {
    throw DimensionError(std::string(op) + ": filters " + shape_str(filters.shape()) +
                         " need " + std::to_string(frames.layout.frame_len) + " columns");
  }
  return ops::matmul(filters, frames.frames);
}

}  // namespace

template <typename T>
FeatureMap<T> encode(const FrameMatrix<T>& frames, const Tensor<T>& filters) {
  return {ops::relu(filter_frames(frames, filters, "encode")), frames.layout};
}

template <typename T>
FeatureMap<T> encode_linear(const FrameMatrix<T>& frames, const Tensor<T>& filters) {
  return {filter_frames(frames, filters, "encode_linear"), frames.layout};
}

template <typename T>
Tensor<T> decode(const FeatureMap<T>& features, const Tensor<T>& basis) {
  const FrameLayout& layout = features.layout;
  if (basis.rank() != 2 || basis.dim(1) != layout.frame_len ||
      features.features.rank() != 2 || features.features.dim(0) != basis.dim(0) ||
      features.features.dim(1) != layout.num_frames) {
    throw DimensionError("decode: features " + shape_str(features.features.shape()) +
                         " incompatible with basis " + shape_str(basis.shape()));
  }
  FrameMatrix<T> frames{ops::matmul(ops::transpose(basis), features.features), layout};
  return overlap_add(frames, false);
}

#define DPTNET_INSTANTIATE_FRAMES(T)                                                   \
  template FrameMatrix<T> frame(const Tensor<T>&, Index, Index);                       \
  template Tensor<T> overlap_add(const FrameMatrix<T>&, bool);                         \
  template FeatureMap<T> encode(const FrameMatrix<T>&, const Tensor<T>&);              \
  template FeatureMap<T> encode_linear(const FrameMatrix<T>&, const Tensor<T>&);       \
  template Tensor<T> decode(const FeatureMap<T>&, const Tensor<T>&);

DPTNET_INSTANTIATE_FRAMES(float)
DPTNET_INSTANTIATE_FRAMES(double)

}  // namespace dptnet
