// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/dual_path.h"

#include <cmath>
#include <string>

#include "dptnet/error.h"
#include "dptnet/numerics/ops.h"

namespace dptnet {

Index SeparatorConfig::resolved_frame_hop() const {
  if (frame_hop > 0) return frame_hop;
  return frame_len / 2 > 0 ? frame_len / 2 : 1;
}

Index SeparatorConfig::resolved_d_ff() const { return d_ff > 0 ? d_ff : 4 * n_filters; }

TransformerConfig SeparatorConfig::transformer() const {
  TransformerConfig c;
  c.d_model = n_filters;
  c.heads = heads;
  c.d_ff = resolved_d_ff();
  c.ffn = ffn;
  c.norm = norm;
  return c;
}

ChunkLayout SeparatorConfig::chunk_layout(Index num_frames) const {
  const Index k = chunk_len > 0 ? chunk_len : default_chunk_len(num_frames);
  const Index h = chunk_hop > 0 ? chunk_hop : (k / 2 > 0 ? k / 2 : 1);
  return plan_chunks(num_frames, k, h);
}

void SeparatorConfig::validate() const {
  if (n_filters < 1 || frame_len < 1 || blocks < 1 || heads < 1) {
    throw ConfigError("separator: N, L, B and h must be positive");
  }
  if (resolved_frame_hop() > frame_len) {
    throw ConfigError("separator: frame_hop must not exceed frame_len");
  }
  if (sources < 2) throw ConfigError("separator: need at least two sources");
  if (chunk_len < 0 || chunk_hop < 0 || (chunk_len > 0 && chunk_hop > chunk_len)) {
    throw ConfigError("separator: need 1 <= chunk_hop <= chunk_len");
  }
  if (sample_rate < 1) throw ConfigError("separator: sample_rate must be positive");
  transformer().validate();
}

template <typename T>
ParameterList<T> SeparatorModel<T>::named_parameters() const {
  ParameterList<T> out{{"encoder", encoder}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    for (auto& p : blocks[b].intra.named_parameters(prefix + "intra.")) out.push_back(p);
    for (auto& p : blocks[b].inter.named_parameters(prefix + "inter.")) out.push_back(p);
  }
  out.push_back({"mask.weight", mask_weight});
  out.push_back({"mask.bias", mask_bias});
  out.push_back({"decoder", decoder});
  return out;
}

template <typename T>
SeparatorModel<T> init_model(const SeparatorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const Index N = config.n_filters, L = config.frame_len, S = config.sources;
  const double bound_n = std::sqrt(1.0 / static_cast<double>(N));
  SeparatorModel<T> m;
  m.config = config;
  m.encoder = uniform_parameter<T>({N, L}, std::sqrt(1.0 / static_cast<double>(L)), rng);
  const TransformerConfig tc = config.transformer();
  for (Index b = 0; b < config.blocks; ++b) {
    DptBlockParams<T> block;
    block.intra = init_transformer<T>(tc, rng);
    block.inter = init_transformer<T>(tc, rng);
    m.blocks.push_back(std::move(block));
  }
  m.mask_weight = uniform_parameter<T>({S * N, N}, bound_n, rng);
  m.mask_bias = uniform_parameter<T>({S * N}, bound_n, rng);
  m.decoder = uniform_parameter<T>({N, L}, bound_n, rng);
  return m;
}

namespace {

template <typename T>
void check_width(const ChunkTensor<T>& d, const TransformerParams<T>& p, const char* op) {
  if (d.data.rank() != 3 || d.data.dim(0) != p.config.d_model) {
    throw DimensionError(std::string(op) + ": chunks " + shape_str(d.data.shape()) +
                         " do not have N=" + std::to_string(p.config.d_model));
  }
}

}  // namespace

template <typename T>
ChunkTensor<T> intra_pass(const ChunkTensor<T>& d, const TransformerParams<T>& p) {
  check_width(d, p, "intra_pass");
  // [N, K, P] -> [P, K, N]: P sequences of length K.
  const Tensor<T> seqs = ops::permute(d.data, {2, 1, 0});
  const Tensor<T> out = transformer_forward(seqs, p);
  return {ops::permute(out, {2, 1, 0}), d.layout};
}

template <typename T>
ChunkTensor<T> inter_pass(const ChunkTensor<T>& d, const TransformerParams<T>& p) {
  check_width(d, p, "inter_pass");
  // [N, K, P] -> [K, P, N]: K sequences of length P.
  const Tensor<T> seqs = ops::permute(d.data, {1, 2, 0});
  const Tensor<T> out = transformer_forward(seqs, p);
  return {ops::permute(out, {2, 0, 1}), d.layout};
}

template <typename T>
ChunkTensor<T> dpt_stack(const ChunkTensor<T>& d, const std::vector<DptBlockParams<T>>& blocks) {
  if (blocks.empty()) throw ContractError("dpt_stack: need at least one block");
  ChunkTensor<T> cur = d;
  for (const auto& block : blocks) cur = inter_pass(intra_pass(cur, block.intra), block.inter);
  return cur;
}

template <typename T>
std::vector<ChunkTensor<T>> mask_head(const ChunkTensor<T>& d, const Tensor<T>& weight,
                                      const Tensor<T>& bias, Index sources) {
  const Index N = d.data.dim(0);
  if (weight.shape() != Shape{sources * N, N} || bias.shape() != Shape{sources * N}) {
    throw DimensionError("mask_head: weight " + shape_str(weight.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not map " + std::to_string(N) + " to " +
                         std::to_string(sources * N) + " channels");
  }
  const Tensor<T> grid = ops::permute(d.data, {1, 2, 0});  // [K, P, N]
  const Tensor<T> all = ops::linear(grid, ops::transpose(weight), bias);  // [K, P, S*N]
  std::vector<ChunkTensor<T>> masks;
  masks.reserve(static_cast<std::size_t>(sources));
  for (Index s = 0; s < sources; ++s) {
    const Tensor<T> part = ops::slice_lastdim(all, s * N, N);
    masks.push_back({ops::relu(ops::permute(part, {2, 0, 1})), d.layout});
  }
  return masks;
}

template <typename T>
std::vector<Tensor<T>> apply_masks(const Tensor<T>& features, const std::vector<Tensor<T>>& masks) {
  std::vector<Tensor<T>> out;
  out.reserve(masks.size());
  for (const auto& m : masks) out.push_back(ops::mul(features, m));
  return out;
}

template <typename T>
SeparationTrace<T> separate_trace(const Tensor<T>& mixture, const SeparatorModel<T>& model) {
  const SeparatorConfig& c = model.config;
  if (!mixture.defined()) throw ContractError("separate: empty waveform");
  SeparationTrace<T> trace;
  const FrameMatrix<T> frames = frame(mixture, c.frame_len, c.resolved_frame_hop());
  trace.features = encode(frames, model.encoder);
  const ChunkLayout chunking = c.chunk_layout(trace.features.layout.num_frames);
  const ChunkTensor<T> d = segment(trace.features.features, chunking.chunk_len, chunking.hop);
  const ChunkTensor<T> processed = dpt_stack(d, model.blocks);
  for (const auto& m : mask_head(processed, model.mask_weight, model.mask_bias, c.sources)) {
    trace.masks.push_back(merge(m));
  }
  for (const auto& y : apply_masks(trace.features.features, trace.masks)) {
    trace.estimates.push_back(decode(FeatureMap<T>{y, trace.features.layout}, model.decoder));
  }
  return trace;
}

template <typename T>
std::vector<Waveform<T>> separate(const Waveform<T>& mixture, const SeparatorModel<T>& model) {
  std::vector<Waveform<T>> out;
  for (auto& est : separate(mixture.samples, model)) out.push_back({est, mixture.sample_rate});
  return out;
}

ParamBreakdown param_breakdown(const SeparatorConfig& config) {
  config.validate();
  ParamBreakdown b;
  const Index N = config.n_filters, L = config.frame_len, S = config.sources;
  b.encoder = N * L;
  b.per_transformer = transformer_param_count(config.transformer());
  b.blocks = 2 * config.blocks * b.per_transformer;
  b.mask_head = S * N * N + S * N;
  b.decoder = N * L;
  b.total = b.encoder + b.blocks + b.mask_head + b.decoder;
  return b;
}

Index count_params(const SeparatorConfig& config) { return param_breakdown(config).total; }

#define DPTNET_INSTANTIATE_DUAL_PATH(T)                                                         \
  template struct SeparatorModel<T>;                                                           \
  template SeparatorModel<T> init_model(const SeparatorConfig&, std::uint64_t);                \
  template ChunkTensor<T> intra_pass(const ChunkTensor<T>&, const TransformerParams<T>&);      \
  template ChunkTensor<T> inter_pass(const ChunkTensor<T>&, const TransformerParams<T>&);      \
  template ChunkTensor<T> dpt_stack(const ChunkTensor<T>&, const std::vector<DptBlockParams<T>>&); \
  template std::vector<ChunkTensor<T>> mask_head(const ChunkTensor<T>&, const Tensor<T>&,      \
                                                 const Tensor<T>&, Index);                     \
  template std::vector<Tensor<T>> apply_masks(const Tensor<T>&, const std::vector<Tensor<T>>&); \
  template SeparationTrace<T> separate_trace(const Tensor<T>&, const SeparatorModel<T>&);     \
  template std::vector<Waveform<T>> separate(const Waveform<T>&, const SeparatorModel<T>&);

DPTNET_INSTANTIATE_DUAL_PATH(float)
DPTNET_INSTANTIATE_DUAL_PATH(double)

}  // namespace dptnet
