// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "dptnet/numerics/tensor.h"

namespace dptnet {

// Geometry of the chunking of an N x I feature map into P chunks of K frames
// taken every H frames. The map is zero-padded at the tail to
// K + (P - 1) * H frames so that every frame lies in at least one chunk.
struct ChunkLayout {
  Index chunk_len = 0;  // K
  Index hop = 0;        // H
  Index num_chunks = 0;  // P
  Index num_frames = 0;  // I

  Index padded_frames() const { return chunk_len + (num_chunks - 1) * hop; }
  Index pad() const { return padded_frames() - num_frames; }
};

// Throws ContractError unless num_frames >= 1, K >= 1 and 1 <= H <= K.
ChunkLayout plan_chunks(Index num_frames, Index chunk_len, Index hop);

// Smallest even K with K >= ceil(sqrt(2 * I)).
Index default_chunk_len(Index num_frames);

template <typename T>
struct ChunkTensor {
  Tensor<T> data;  // [N x K x P]; data[n, k, p] = X[n, p * H + k]
  ChunkLayout layout;
};

template <typename T>
ChunkTensor<T> segment(const Tensor<T>& features, Index chunk_len, Index hop);

// Overlap-adds the chunks, divides each frame by the number of chunks that
// contain it and drops the padding: merge(segment(X)) == X.
template <typename T>
Tensor<T> merge(const ChunkTensor<T>& chunks);

}  // namespace dptnet
