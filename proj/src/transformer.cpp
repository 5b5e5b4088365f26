// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/transformer.h"

#include <cmath>

#include "dptnet/error.h"
#include "dptnet/numerics/ops.h"

namespace dptnet {

std::string to_string(FfnKind kind) {
  switch (kind) {
    case FfnKind::kBiLstm:
      return "bilstm";
    case FfnKind::kBiTanh:
      return "tanh";
    case FfnKind::kLinear:
      return "linear";
  }
  return "?";
}

FfnKind parse_ffn_kind(const std::string& text) {
  if (text == "bilstm") return FfnKind::kBiLstm;
  if (text == "tanh") return FfnKind::kBiTanh;
  if (text == "linear") return FfnKind::kLinear;
  throw ConfigError("unknown feed-forward kind '" + text + "' (bilstm, tanh, linear)");
}

std::string to_string(NormScope scope) {
  return scope == NormScope::kSequence ? "sequence" : "global";
}

NormScope parse_norm_scope(const std::string& text) {
  if (text == "sequence") return NormScope::kSequence;
  if (text == "global") return NormScope::kGlobal;
  throw ConfigError("unknown layer-norm scope '" + text + "' (sequence, global)");
}

void TransformerConfig::validate() const {
  if (d_model < 1 || heads < 1 || d_ff < 1) {
    throw ConfigError("transformer: d_model, heads and d_ff must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("transformer: d_model=" + std::to_string(d_model) +
                      " is not divisible by heads=" + std::to_string(heads));
  }
  if (ffn != FfnKind::kLinear && d_ff % 2 != 0) {
    throw ConfigError("transformer: bidirectional d_ff must be even, got " + std::to_string(d_ff));
  }
  if (!(ln_eps > 0.0)) throw ConfigError("transformer: ln_eps must be positive");
}

Index transformer_param_count(const TransformerConfig& c) {
  const Index d = c.d_model;
  Index total = 4 * (d * d + d);  // Q, K, V, O
  switch (c.ffn) {
    case FfnKind::kBiLstm: {
      const Index h = c.d_ff / 2;
      total += 2 * (d * 4 * h + h * 4 * h + 4 * h);
      break;
    }
    case FfnKind::kBiTanh: {
      const Index h = c.d_ff / 2;
      total += 2 * (d * h + h * h + h);
      break;
    }
    case FfnKind::kLinear:
      total += d * c.d_ff + c.d_ff;
      break;
  }
  total += c.d_ff * d + d;  // W2, b2
  total += 4 * d;           // two layer norms
  return total;
}

template <typename T>
ParameterList<T> TransformerParams<T>::named_parameters(const std::string& prefix) const {
  ParameterList<T> out = {
      {prefix + "attn.wq", attn.wq}, {prefix + "attn.bq", attn.bq},
      {prefix + "attn.wk", attn.wk}, {prefix + "attn.bk", attn.bk},
      {prefix + "attn.wv", attn.wv}, {prefix + "attn.bv", attn.bv},
      {prefix + "attn.wo", attn.wo}, {prefix + "attn.bo", attn.bo},
  };
  if (config.ffn == FfnKind::kLinear) {
    out.push_back({prefix + "ffn.w1", w1});
    out.push_back({prefix + "ffn.b1", b1});
  } else {
    out.push_back({prefix + "rnn.w_ih_fwd", rnn.w_ih_fwd});
    out.push_back({prefix + "rnn.w_hh_fwd", rnn.w_hh_fwd});
    out.push_back({prefix + "rnn.b_fwd", rnn.b_fwd});
    out.push_back({prefix + "rnn.w_ih_bwd", rnn.w_ih_bwd});
    out.push_back({prefix + "rnn.w_hh_bwd", rnn.w_hh_bwd});
    out.push_back({prefix + "rnn.b_bwd", rnn.b_bwd});
  }
  out.push_back({prefix + "ffn.w2", w2});
  out.push_back({prefix + "ffn.b2", b2});
  out.push_back({prefix + "ln1.gain", ln1_gain});
  out.push_back({prefix + "ln1.bias", ln1_bias});
  out.push_back({prefix + "ln2.gain", ln2_gain});
  out.push_back({prefix + "ln2.bias", ln2_bias});
  return out;
}

template <typename T>
TransformerParams<T> init_transformer(const TransformerConfig& config, Rng& rng) {
  config.validate();
  const Index d = config.d_model;
  const double bound_d = std::sqrt(1.0 / static_cast<double>(d));
  TransformerParams<T> p;
  p.config = config;
  auto& a = p.attn;
  a.heads = config.heads;
  a.wq = uniform_parameter<T>({d, d}, bound_d, rng);
  a.bq = uniform_parameter<T>({d}, bound_d, rng);
  a.wk = uniform_parameter<T>({d, d}, bound_d, rng);
  a.bk = uniform_parameter<T>({d}, bound_d, rng);
  a.wv = uniform_parameter<T>({d, d}, bound_d, rng);
  a.bv = uniform_parameter<T>({d}, bound_d, rng);
  a.wo = uniform_parameter<T>({d, d}, bound_d, rng);
  a.bo = uniform_parameter<T>({d}, bound_d, rng);

  if (config.ffn == FfnKind::kLinear) {
    p.w1 = uniform_parameter<T>({d, config.d_ff}, bound_d, rng);
    p.b1 = uniform_parameter<T>({config.d_ff}, bound_d, rng);
  } else {
    const Index h = config.d_ff / 2;
    const Index gates = config.ffn == FfnKind::kBiLstm ? 4 * h : h;
    const double bound_h = std::sqrt(1.0 / static_cast<double>(h));
    p.rnn.kind = config.ffn;
    p.rnn.w_ih_fwd = uniform_parameter<T>({d, gates}, bound_h, rng);
    p.rnn.w_hh_fwd = uniform_parameter<T>({h, gates}, bound_h, rng);
    p.rnn.b_fwd = uniform_parameter<T>({gates}, bound_h, rng);
    p.rnn.w_ih_bwd = uniform_parameter<T>({d, gates}, bound_h, rng);
    p.rnn.w_hh_bwd = uniform_parameter<T>({h, gates}, bound_h, rng);
    p.rnn.b_bwd = uniform_parameter<T>({gates}, bound_h, rng);
  }
  const double bound_ff = std::sqrt(1.0 / static_cast<double>(config.d_ff));
  p.w2 = uniform_parameter<T>({config.d_ff, d}, bound_ff, rng);
  p.b2 = uniform_parameter<T>({d}, bound_ff, rng);
  p.ln1_gain = constant_parameter<T>({d}, T(1));
  p.ln1_bias = constant_parameter<T>({d}, T(0));
  p.ln2_gain = constant_parameter<T>({d}, T(1));
  p.ln2_bias = constant_parameter<T>({d}, T(0));
  return p;
}

namespace {

// Views a [l x d] sequence as a batch of one.
template <typename T>
Tensor<T> as_batch(const Tensor<T>& z, const char* op) {
  if (z.rank() == 3) return z;
  if (z.rank() == 2) return ops::reshape(z, {1, z.dim(0), z.dim(1)});
  throw DimensionError(std::string(op) + ": expected [l x d] or [B x l x d], got " +
                       shape_str(z.shape()));
}

template <typename T>
Tensor<T> restore_rank(const Tensor<T>& y, const Tensor<T>& like) {
  return like.rank() == 2 ? ops::reshape(y, like.shape()) : y;
}

// [B x l x d] -> [B*h x l x d/h]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, Index heads) {
  const Index B = x.dim(0), l = x.dim(1), d = x.dim(2), w = d / heads;
  if (heads == 1) return x;
  Tensor<T> y = ops::permute(ops::reshape(x, {B, l, heads, w}), {0, 2, 1, 3});
  return ops::reshape(y, {B * heads, l, w});
}

// [B*h x l x d/h] -> [B x l x d]
template <typename T>
Tensor<T> join_heads(const Tensor<T>& x, Index batch, Index heads) {
  if (heads == 1) return x;
  const Index l = x.dim(1), w = x.dim(2);
  Tensor<T> y = ops::permute(ops::reshape(x, {batch, heads, l, w}), {0, 2, 1, 3});
  return ops::reshape(y, {batch, l, heads * w});
}

template <typename T>
Tensor<T> bidirectional(const Tensor<T>& x, const RecurrentParams<T>& rnn) {
  if (rnn.kind == FfnKind::kBiLstm) {
    return ops::concat_lastdim(ops::lstm(x, rnn.w_ih_fwd, rnn.w_hh_fwd, rnn.b_fwd, false),
                               ops::lstm(x, rnn.w_ih_bwd, rnn.w_hh_bwd, rnn.b_bwd, true));
  }
  if (rnn.kind == FfnKind::kBiTanh) {
    return ops::concat_lastdim(ops::rnn_tanh(x, rnn.w_ih_fwd, rnn.w_hh_fwd, rnn.b_fwd, false),
                               ops::rnn_tanh(x, rnn.w_ih_bwd, rnn.w_hh_bwd, rnn.b_bwd, true));
  }
  throw ConfigError("improved_ffn: recurrent parameters required, got kind " + to_string(rnn.kind));
}

}  // namespace

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k) {
  if (q.shape() != k.shape()) {
    throw DimensionError("attention: query " + shape_str(q.shape()) + " and key " +
                         shape_str(k.shape()) + " differ");
  }
  const Tensor<T> qb = as_batch(q, "attention"), kb = as_batch(k, "attention");
  const T factor = T(1) / std::sqrt(static_cast<T>(qb.dim(2)));
  Tensor<T> w = ops::softmax_rows(ops::scale(ops::batched_matmul(qb, kb, true), factor));
  return q.rank() == 2 ? ops::reshape(w, {q.dim(0), q.dim(0)}) : w;
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (v.shape() != q.shape()) {
    throw DimensionError("attention: value " + shape_str(v.shape()) + " does not match query " +
                         shape_str(q.shape()));
  }
  const Tensor<T> w = as_batch(attention_weights(q, k), "attention");
  return restore_rank(ops::batched_matmul(w, as_batch(v, "attention")), q);
}

template <typename T>
Tensor<T> multi_head(const Tensor<T>& z, const AttentionParams<T>& p) {
  const Tensor<T> zb = as_batch(z, "multi_head");
  const Index d = zb.dim(2);
  if (p.heads < 1 || d % p.heads != 0) {
    throw ConfigError("multi_head: d=" + std::to_string(d) + " is not divisible by h=" +
                      std::to_string(p.heads));
  }
  const Tensor<T> q = split_heads(ops::linear(zb, p.wq, p.bq), p.heads);
  const Tensor<T> k = split_heads(ops::linear(zb, p.wk, p.bk), p.heads);
  const Tensor<T> v = split_heads(ops::linear(zb, p.wv, p.bv), p.heads);
  const Tensor<T> heads = join_heads(scaled_dot_attention(q, k, v), zb.dim(0), p.heads);
  return restore_rank(ops::linear(heads, p.wo, p.bo), z);
}

template <typename T>
Tensor<T> improved_ffn(const Tensor<T>& mid, const RecurrentParams<T>& rnn, const Tensor<T>& w2,
                       const Tensor<T>& b2) {
  const Tensor<T> xb = as_batch(mid, "improved_ffn");
  return restore_rank(ops::linear(ops::relu(bidirectional(xb, rnn)), w2, b2), mid);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& mid, const TransformerParams<T>& params) {
  if (params.config.ffn == FfnKind::kLinear) {
    return ops::linear(ops::relu(ops::linear(mid, params.w1, params.b1)), params.w2, params.b2);
  }
  return improved_ffn(mid, params.rnn, params.w2, params.b2);
}

template <typename T>
Tensor<T> transformer_forward(const Tensor<T>& z, const TransformerParams<T>& params) {
  const Tensor<T> zb = as_batch(z, "transformer");
  if (zb.dim(2) != params.config.d_model) {
    throw DimensionError("transformer: input " + shape_str(z.shape()) + " does not have width " +
                         std::to_string(params.config.d_model));
  }
  const int axes = params.config.norm == NormScope::kSequence ? 2 : 3;
  const T eps = static_cast<T>(params.config.ln_eps);
  const Tensor<T> mid = ops::layer_norm(ops::add(zb, multi_head(zb, params.attn)),
                                        params.ln1_gain, params.ln1_bias, axes, eps);
  const Tensor<T> out = ops::layer_norm(ops::add(mid, feed_forward(mid, params)),
                                        params.ln2_gain, params.ln2_bias, axes, eps);
  return restore_rank(out, z);
}

#define DPTNET_INSTANTIATE_TRANSFORMER(T)                                                     \
  template struct TransformerParams<T>;                                                      \
  template TransformerParams<T> init_transformer(const TransformerConfig&, Rng&);            \
  template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&,                \
                                          const Tensor<T>&);                                 \
  template Tensor<T> multi_head(const Tensor<T>&, const AttentionParams<T>&);                \
  template Tensor<T> improved_ffn(const Tensor<T>&, const RecurrentParams<T>&,               \
                                  const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> feed_forward(const Tensor<T>&, const TransformerParams<T>&);            \
  template Tensor<T> transformer_forward(const Tensor<T>&, const TransformerParams<T>&);

DPTNET_INSTANTIATE_TRANSFORMER(float)
DPTNET_INSTANTIATE_TRANSFORMER(double)

}  // namespace dptnet
