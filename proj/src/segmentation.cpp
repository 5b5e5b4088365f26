// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/segmentation.h"

#include <cmath>
#include <string>
#include <vector>

#include "dptnet/error.h"
#include "dptnet/numerics/tape.h"

namespace dptnet {

ChunkLayout plan_chunks(Index num_frames, Index chunk_len, Index hop) {
  if (num_frames < 1) throw ContractError("segment: no frames to chunk");
  if (chunk_len < 1 || hop < 1 || hop > chunk_len) {
    throw ContractError("segment: need K >= 1 and 1 <= H <= K, got K=" +
                        std::to_string(chunk_len) + " H=" + std::to_string(hop));
  }
  ChunkLayout layout;
  layout.chunk_len = chunk_len;
  layout.hop = hop;
  layout.num_frames = num_frames;
  const Index rest = num_frames > chunk_len ? num_frames - chunk_len : 0;
  layout.num_chunks = (rest + hop - 1) / hop + 1;
  return layout;
}

Index default_chunk_len(Index num_frames) {
  const auto target = static_cast<Index>(std::ceil(std::sqrt(2.0 * static_cast<double>(num_frames))));
  Index k = target < 2 ? 2 : target;
  if (k % 2 != 0) ++k;
  return k;
}

template <typename T>
ChunkTensor<T> segment(const Tensor<T>& features, Index chunk_len, Index hop) {
  if (features.rank() != 2) {
    throw DimensionError("segment: expected an N x I feature map, got " + shape_str(features.shape()));
  }
  const Index N = features.dim(0), I = features.dim(1);
  const ChunkLayout layout = plan_chunks(I, chunk_len, hop);
  const Index K = layout.chunk_len, P = layout.num_chunks;
  Tensor<T> data({N, K, P});
  T* d = data.mutable_data().data();
  const T* x = features.ptr();
  for (Index n = 0; n < N; ++n) {
    for (Index k = 0; k < K; ++k) {
      for (Index p = 0; p < P; ++p) {
        const Index i = p * hop + k;
        d[(n * K + k) * P + p] = i < I ? x[n * I + i] : T(0);
      }
    }
  }
  record_op(data, {features}, [features, data, N, I, K, P, hop]() mutable {
    const T* g = data.grad().data();
    T* gx = features.grad_buffer().data();
    for (Index n = 0; n < N; ++n)
      for (Index k = 0; k < K; ++k)
        for (Index p = 0; p < P; ++p) {
          const Index i = p * hop + k;
          if (i < I) gx[n * I + i] += g[(n * K + k) * P + p];
        }
  });
  return {data, layout};
}

template <typename T>
Tensor<T> merge(const ChunkTensor<T>& chunks) {
  const ChunkLayout& layout = chunks.layout;
  const Index K = layout.chunk_len, P = layout.num_chunks, H = layout.hop;
  const Index I = layout.num_frames;
  if (chunks.data.rank() != 3 || chunks.data.dim(1) != K || chunks.data.dim(2) != P) {
    throw DimensionError("merge: chunk data " + shape_str(chunks.data.shape()) +
                         " does not match K=" + std::to_string(K) + ", P=" + std::to_string(P));
  }
  const Index N = chunks.data.dim(0);
  std::vector<T> weight(static_cast<std::size_t>(I), T(0));
  for (Index p = 0; p < P; ++p)
    for (Index k = 0; k < K; ++k)
      if (p * H + k < I) weight[p * H + k] += T(1);
  for (T& w : weight) w = T(1) / w;

  Tensor<T> out({N, I});
  T* y = out.mutable_data().data();
  const T* d = chunks.data.ptr();
  for (Index n = 0; n < N; ++n)
    for (Index k = 0; k < K; ++k)
      for (Index p = 0; p < P; ++p) {
        const Index i = p * H + k;
        if (i < I) y[n * I + i] += d[(n * K + k) * P + p];
      }
  for (Index n = 0; n < N; ++n)
    for (Index i = 0; i < I; ++i) y[n * I + i] *= weight[i];

  const Tensor<T> src = chunks.data;
  record_op(out, {src}, [src, out, weight, N, I, K, P, H]() mutable {
    const T* g = out.grad().data();
    T* gd = src.grad_buffer().data();
    for (Index n = 0; n < N; ++n)
      for (Index k = 0; k < K; ++k)
        for (Index p = 0; p < P; ++p) {
          const Index i = p * H + k;
          if (i < I) gd[(n * K + k) * P + p] += g[n * I + i] * weight[i];
        }
  });
  return out;
}

template ChunkTensor<float> segment(const Tensor<float>&, Index, Index);
template ChunkTensor<double> segment(const Tensor<double>&, Index, Index);
template Tensor<float> merge(const ChunkTensor<float>&);
template Tensor<double> merge(const ChunkTensor<double>&);

}  // namespace dptnet
