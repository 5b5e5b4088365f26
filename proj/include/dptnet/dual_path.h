// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

#include "dptnet/frames.h"
#include "dptnet/numerics/parameters.h"
#include "dptnet/segmentation.h"
#include "dptnet/transformer.h"

namespace dptnet {

// Architecture of the separator. Defaults are the full-size configuration
// (about 2.78M parameters).
struct SeparatorConfig {
  Index n_filters = 64;   // N, also the transformer width
  Index frame_len = 2;    // L
  Index frame_hop = 0;    // 0: frame_len / 2 (at least 1)
  Index blocks = 6;       // B
  Index heads = 4;        // h
  Index d_ff = 0;         // 0: 4 * N
  Index sources = 2;      // S
  Index chunk_len = 0;    // K; 0: default_chunk_len(I) per input
  Index chunk_hop = 0;    // H; 0: K / 2 (at least 1)
  FfnKind ffn = FfnKind::kBiLstm;
  NormScope norm = NormScope::kSequence;
  int sample_rate = kDefaultSampleRate;

  Index resolved_frame_hop() const;
  Index resolved_d_ff() const;
  TransformerConfig transformer() const;
  // K and H used for an input with `num_frames` encoder frames.
  ChunkLayout chunk_layout(Index num_frames) const;
  // Throws ConfigError on inconsistent values.
  void validate() const;
};

template <typename T>
struct DptBlockParams {
  TransformerParams<T> intra;
  TransformerParams<T> inter;
};

template <typename T>
struct SeparatorModel {
  SeparatorConfig config;
  Tensor<T> encoder;      // W [N x L]
  std::vector<DptBlockParams<T>> blocks;
  Tensor<T> mask_weight;  // pointwise 2-D convolution [(S*N) x N]
  Tensor<T> mask_bias;    // [S*N]
  Tensor<T> decoder;      // V [N x L]

  // Stable names in a fixed order; used by the optimizer and checkpoints.
  ParameterList<T> named_parameters() const;
};

template <typename T>
SeparatorModel<T> init_model(const SeparatorConfig& config, std::uint64_t seed);

// Transformer over every chunk: sequences D[:, :, p]^T of length K.
template <typename T>
ChunkTensor<T> intra_pass(const ChunkTensor<T>& d, const TransformerParams<T>& p);

// Transformer across chunks: sequences D[:, j, :]^T of length P.
template <typename T>
ChunkTensor<T> inter_pass(const ChunkTensor<T>& d, const TransformerParams<T>& p);

// intra then inter for each block in order; throws ContractError on an empty list.
template <typename T>
ChunkTensor<T> dpt_stack(const ChunkTensor<T>& d, const std::vector<DptBlockParams<T>>& blocks);

// 1x1 convolution N -> S*N channels over the K x P grid, split per source, ReLU.
template <typename T>
std::vector<ChunkTensor<T>> mask_head(const ChunkTensor<T>& d, const Tensor<T>& weight,
                                      const Tensor<T>& bias, Index sources);

// Y_s = X * M_s elementwise.
template <typename T>
std::vector<Tensor<T>> apply_masks(const Tensor<T>& features, const std::vector<Tensor<T>>& masks);

// Intermediate values of one forward pass, for inspection and tests.
template <typename T>
struct SeparationTrace {
  FeatureMap<T> features;
  std::vector<Tensor<T>> masks;
  std::vector<Tensor<T>> estimates;
};

// frame -> encode -> segment -> dpt_stack -> mask_head -> merge -> mask -> decode.
// Every estimate has the input's length.
template <typename T>
SeparationTrace<T> separate_trace(const Tensor<T>& mixture, const SeparatorModel<T>& model);

template <typename T>
std::vector<Tensor<T>> separate(const Tensor<T>& mixture, const SeparatorModel<T>& model) {
  return separate_trace(mixture, model).estimates;
}

template <typename T>
std::vector<Waveform<T>> separate(const Waveform<T>& mixture, const SeparatorModel<T>& model);

template <typename T>
Index count_params(const SeparatorModel<T>& model) {
  return count_elements(model.named_parameters());
}

// Same count from the configuration alone.
Index count_params(const SeparatorConfig& config);

struct ParamBreakdown {
  Index encoder = 0;
  Index per_transformer = 0;
  Index blocks = 0;
  Index mask_head = 0;
  Index decoder = 0;
  Index total = 0;
};
ParamBreakdown param_breakdown(const SeparatorConfig& config);

}  // namespace dptnet
