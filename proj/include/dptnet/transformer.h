// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "dptnet/numerics/parameters.h"
#include "dptnet/numerics/tensor.h"

namespace dptnet {

// First layer of the position-wise feed-forward network.
enum class FfnKind {
  kBiLstm,  // bidirectional LSTM, d_ff/2 units per direction (default)
  kBiTanh,  // bidirectional Elman RNN with tanh, same widths
  kLinear,  // plain affine layer W1, b1 (order-agnostic reference layer)
};

// Statistics of the two layer norms: per sequence (l x d slab) or over the
// whole batch of sequences handed to one transformer call.
enum class NormScope { kSequence, kGlobal };

std::string to_string(FfnKind kind);
FfnKind parse_ffn_kind(const std::string& text);
std::string to_string(NormScope scope);
NormScope parse_norm_scope(const std::string& text);

struct TransformerConfig {
  Index d_model = 64;
  Index heads = 4;
  Index d_ff = 256;
  FfnKind ffn = FfnKind::kBiLstm;
  NormScope norm = NormScope::kSequence;
  double ln_eps = 1e-5;

  // Throws ConfigError on d_model % heads != 0 or an odd bidirectional d_ff.
  void validate() const;
};

template <typename T>
struct AttentionParams {
  // Projections are stored whole ([d x d]); head i uses column block i.
  Tensor<T> wq, bq, wk, bk, wv, bv;
  Tensor<T> wo, bo;
  Index heads = 1;
};

template <typename T>
struct RecurrentParams {
  FfnKind kind = FfnKind::kBiLstm;
  // Gate blocks are ordered (input, forget, cell, output) for the LSTM.
  Tensor<T> w_ih_fwd, w_hh_fwd, b_fwd;
  Tensor<T> w_ih_bwd, w_hh_bwd, b_bwd;
};

template <typename T>
struct TransformerParams {
  TransformerConfig config;
  AttentionParams<T> attn;
  RecurrentParams<T> rnn;  // kBiLstm / kBiTanh
  Tensor<T> w1, b1;        // kLinear
  Tensor<T> w2, b2;
  Tensor<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  ParameterList<T> named_parameters(const std::string& prefix) const;
};

// Affine weights and biases ~ U(+-sqrt(1/fan_in)); recurrent weights
// ~ U(+-sqrt(1/hidden)); layer-norm gain 1 and bias 0.
template <typename T>
TransformerParams<T> init_transformer(const TransformerConfig& config, Rng& rng);

// Number of scalar parameters of one layer, computed from the config alone.
Index transformer_param_count(const TransformerConfig& config);

// Sequences are [l x d] or batched [B x l x d] throughout.

// softmax(Q K^T / sqrt(dk)) where dk is the last extent of Q.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k);

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

// Projects Z with Wq/Wk/Wv, attends per head of width d/h, concatenates the
// heads and projects with Wo. No mask and no positional encoding.
template <typename T>
Tensor<T> multi_head(const Tensor<T>& z, const AttentionParams<T>& p);

// ReLU(RNN(mid)) W2 + b2, both directions concatenated to width d_ff.
template <typename T>
Tensor<T> improved_ffn(const Tensor<T>& mid, const RecurrentParams<T>& rnn, const Tensor<T>& w2,
                       const Tensor<T>& b2);

// Dispatches on params.config.ffn (kLinear gives ReLU(mid W1 + b1) W2 + b2).
template <typename T>
Tensor<T> feed_forward(const Tensor<T>& mid, const TransformerParams<T>& params);

// Mid = LN(Z + MultiHead(Z)); Output = LN(Mid + FFN(Mid)).
template <typename T>
Tensor<T> transformer_forward(const Tensor<T>& z, const TransformerParams<T>& params);

}  // namespace dptnet
