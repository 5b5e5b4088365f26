// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "dptnet/numerics/tensor.h"

// Waveform framing and the learned filter-bank encoder/decoder.
//
// A signal of T samples is zero-padded at the tail so that frames of
// `frame_len` samples taken every `hop` samples cover every sample. Frame i
// occupies samples [i*hop, i*hop + frame_len) of the padded signal. Frames
// are stored column-wise: a FrameMatrix holds frame_len x num_frames values.
namespace dptnet {

inline constexpr int kDefaultSampleRate = 8000;

template <typename T>
struct Waveform {
  Tensor<T> samples;  // [T]
  int sample_rate = kDefaultSampleRate;

  Index length() const { return samples.defined() ? samples.size() : 0; }
};

struct FrameLayout {
  Index frame_len = 0;
  Index hop = 0;
  Index num_frames = 0;
  Index signal_len = 0;

  Index padded_len() const { return frame_len + (num_frames - 1) * hop; }
  Index pad() const { return padded_len() - signal_len; }
};

// Throws ContractError unless signal_len >= 1, frame_len >= 1, 1 <= hop <= frame_len.
FrameLayout plan_frames(Index signal_len, Index frame_len, Index hop);

template <typename T>
struct FrameMatrix {
  Tensor<T> frames;  // [frame_len x num_frames]
  FrameLayout layout;
};

template <typename T>
struct FeatureMap {
  Tensor<T> features;  // [N x num_frames]
  FrameLayout layout;
};

template <typename T>
FrameMatrix<T> frame(const Tensor<T>& signal, Index frame_len, Index hop);

template <typename T>
FrameMatrix<T> frame(const Waveform<T>& signal, Index frame_len, Index hop) {
  return frame(signal.samples, frame_len, hop);
}

// Sums frames at their offsets and strips the tail padding. With `normalize`
// every sample is divided by the number of frames covering it, which makes
// overlap_add(frame(x), true) reproduce x.
template <typename T>
Tensor<T> overlap_add(const FrameMatrix<T>& frames, bool normalize);

// X = ReLU(filters * frames), filters [N x frame_len].
template <typename T>
FeatureMap<T> encode(const FrameMatrix<T>& frames, const Tensor<T>& filters);

// The encoder without its ReLU; its adjoint is decode() with the same filters.
template <typename T>
FeatureMap<T> encode_linear(const FrameMatrix<T>& frames, const Tensor<T>& filters);

// Transposed convolution: frames = basis^T * features, then unnormalised
// overlap-add back to the original signal length. basis is [N x frame_len].
template <typename T>
Tensor<T> decode(const FeatureMap<T>& features, const Tensor<T>& basis);

}  // namespace dptnet
