// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/grad_suite.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "dptnet/error.h"
#include "dptnet/numerics/ops.h"
#include "dptnet/numerics/parameters.h"
#include "dptnet/numerics/tape.h"
#include "dptnet/training.h"

namespace dptnet {

namespace {

using TensorD = Tensor<double>;
using Inputs = std::vector<TensorD>;
using MultiFn = std::function<TensorD(const Inputs&)>;

TensorD rand(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(shape);
  for (double& v : t.mutable_data()) v = uniform(rng, lo, hi);
  return t;
}

// Values bounded away from zero so ReLU kinks stay out of reach of the
// finite-difference step.
TensorD rand_away_from_zero(const Shape& shape, Rng& rng) {
  TensorD t(shape);
  for (double& v : t.mutable_data()) {
    const double m = uniform(rng, 0.1, 1.0);
    v = uniform(rng, 0.0, 1.0) < 0.5 ? -m : m;
  }
  return t;
}

// sum(y * r) with a fixed random r: exercises the full output Jacobian.
TensorD probe(const TensorD& y, const TensorD& r) { return ops::sum(ops::mul(y, r)); }

struct CaseContext {
  Rng rng;
  GradCheckOptions check;
};

// Checks fn w.r.t. each input in turn and keeps the worst coordinate.
GradCheckReport check_each(const MultiFn& fn, Inputs inputs, CaseContext& ctx) {
  const TensorD out = [&] {
    NoGradScope<double> no_grad;
    return fn(inputs);
  }();
  const TensorD r = rand(out.shape(), ctx.rng);
  GradCheckReport worst;
  Index checked = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const GradCheckReport rep = grad_check_report(
        [&](const TensorD&) { return out.rank() == 0 ? fn(inputs) : probe(fn(inputs), r); },
        inputs[i], ctx.check);
    checked += rep.checked;
    if (worst.worst_index < 0 || rep.max_rel_error > worst.max_rel_error) worst = rep;
  }
  worst.checked = checked;
  return worst;
}

// y = x^2 with the derivative recorded as x instead of 2x.
TensorD broken_square(const TensorD& x) {
  TensorD out(x.shape());
  for (Index i = 0; i < x.size(); ++i) out.mutable_data()[static_cast<std::size_t>(i)] = x[i] * x[i];
  record_op(out, {x}, [x, out]() mutable {
    auto g = x.grad_buffer();
    for (Index i = 0; i < x.size(); ++i) g[static_cast<std::size_t>(i)] += out.grad()[static_cast<std::size_t>(i)] * x[i];
  });
  return out;
}

TransformerConfig small_transformer(FfnKind ffn, NormScope norm) {
  TransformerConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.d_ff = 8;
  c.ffn = ffn;
  c.norm = norm;
  return c;
}

// Checks a transformer w.r.t. its input and every parameter tensor.
GradCheckReport check_transformer(const TransformerConfig& config, const Shape& input_shape,
                                  CaseContext& ctx) {
  const TransformerParams<double> params = init_transformer<double>(config, ctx.rng);
  Inputs inputs{rand(input_shape, ctx.rng)};
  for (const auto& p : params.named_parameters("")) inputs.push_back(p.tensor);
  return check_each([&](const Inputs& in) { return transformer_forward(in[0], params); }, inputs,
                    ctx);
}

SeparatorModel<double> model_for(const SeparatorConfig& config, Rng& rng) {
  return init_model<double>(config, rng());
}

using CaseFn = std::function<GradCheckReport(CaseContext&, const GradSuiteOptions&)>;

const std::vector<std::pair<std::string, CaseFn>>& registry() {
  static const std::vector<std::pair<std::string, CaseFn>> cases = [] {
    std::vector<std::pair<std::string, CaseFn>> c;
    auto add = [&](std::string name, CaseFn fn) { c.emplace_back(std::move(name), std::move(fn)); };

    add("matmul", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::matmul(in[0], in[1]); },
                        {rand({3, 4}, x.rng), rand({4, 5}, x.rng)}, x);
    });
    add("batched_matmul", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::batched_matmul(in[0], in[1]); },
                        {rand({2, 3, 4}, x.rng), rand({2, 4, 5}, x.rng)}, x);
    });
    add("batched_matmul_t", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::batched_matmul(in[0], in[1], true); },
                        {rand({2, 3, 4}, x.rng), rand({2, 5, 4}, x.rng)}, x);
    });
    add("linear", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::linear(in[0], in[1], in[2]); },
                        {rand({2, 3, 4}, x.rng), rand({4, 5}, x.rng), rand({5}, x.rng)}, x);
    });
    add("add", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::add(in[0], in[1]); },
                        {rand({3, 4}, x.rng), rand({3, 4}, x.rng)}, x);
    });
    add("sub", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::sub(in[0], in[1]); },
                        {rand({3, 4}, x.rng), rand({3, 4}, x.rng)}, x);
    });
    add("mul", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::mul(in[0], in[1]); },
                        {rand({3, 4}, x.rng), rand({3, 4}, x.rng)}, x);
    });
    add("scale", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::scale(in[0], -1.7); },
                        {rand({3, 4}, x.rng)}, x);
    });
    add("relu", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::relu(in[0]); },
                        {rand_away_from_zero({3, 4}, x.rng)}, x);
    });
    add("concat_lastdim", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::concat_lastdim(in[0], in[1]); },
                        {rand({2, 3}, x.rng), rand({2, 4}, x.rng)}, x);
    });
    add("slice_lastdim", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::slice_lastdim(in[0], 1, 3); },
                        {rand({2, 3, 5}, x.rng)}, x);
    });
    add("transpose", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::transpose(in[0]); },
                        {rand({3, 5}, x.rng)}, x);
    });
    add("reshape", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::reshape(in[0], {6, 2}); },
                        {rand({3, 4}, x.rng)}, x);
    });
    add("permute", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::permute(in[0], {2, 0, 1}); },
                        {rand({2, 3, 4}, x.rng)}, x);
    });
    add("sum", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::sum(ops::mul(in[0], in[0])); },
                        {rand({3, 4}, x.rng)}, x);
    });
    add("softmax_rows", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return ops::softmax_rows(in[0]); },
                        {rand({3, 5}, x.rng, -2.0, 2.0)}, x);
    });
    add("layer_norm", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each(
          [](const Inputs& in) { return ops::layer_norm(in[0], in[1], in[2], 2, 1e-5); },
          {rand({2, 3, 4}, x.rng), rand({4}, x.rng, 0.5, 1.5), rand({4}, x.rng)}, x);
    });
    add("layer_norm_global", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each(
          [](const Inputs& in) { return ops::layer_norm(in[0], in[1], in[2], 3, 1e-5); },
          {rand({2, 3, 4}, x.rng), rand({4}, x.rng, 0.5, 1.5), rand({4}, x.rng)}, x);
    });
    for (bool reverse : {false, true}) {
      add(reverse ? "lstm_reverse" : "lstm", [reverse](CaseContext& x, const GradSuiteOptions&) {
        return check_each(
            [reverse](const Inputs& in) { return ops::lstm(in[0], in[1], in[2], in[3], reverse); },
            {rand({2, 5, 3}, x.rng), rand({3, 16}, x.rng, -0.5, 0.5),
             rand({4, 16}, x.rng, -0.5, 0.5), rand({16}, x.rng, -0.5, 0.5)},
            x);
      });
      add(reverse ? "rnn_tanh_reverse" : "rnn_tanh",
          [reverse](CaseContext& x, const GradSuiteOptions&) {
            return check_each(
                [reverse](const Inputs& in) {
                  return ops::rnn_tanh(in[0], in[1], in[2], in[3], reverse);
                },
                {rand({2, 5, 3}, x.rng), rand({3, 4}, x.rng, -0.5, 0.5),
                 rand({4, 4}, x.rng, -0.5, 0.5), rand({4}, x.rng, -0.5, 0.5)},
                x);
          });
    }
    add("frame", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return frame(in[0], 4, 2).frames; },
                        {rand({11}, x.rng)}, x);
    });
    for (bool normalize : {false, true}) {
      add(normalize ? "overlap_add_normalized" : "overlap_add",
          [normalize](CaseContext& x, const GradSuiteOptions&) {
            const FrameLayout layout = plan_frames(11, 4, 2);
            return check_each(
                [&](const Inputs& in) {
                  return overlap_add(FrameMatrix<double>{in[0], layout}, normalize);
                },
                {rand({4, layout.num_frames}, x.rng)}, x);
          });
    }
    add("encode", [](CaseContext& x, const GradSuiteOptions&) {
      const FrameLayout layout = plan_frames(9, 2, 1);
      return check_each(
          [&](const Inputs& in) { return encode(FrameMatrix<double>{in[0], layout}, in[1]).features; },
          {rand({2, layout.num_frames}, x.rng, 0.5, 1.0), rand_away_from_zero({5, 2}, x.rng)}, x);
    });
    add("decode", [](CaseContext& x, const GradSuiteOptions&) {
      const FrameLayout layout = plan_frames(9, 2, 1);
      return check_each(
          [&](const Inputs& in) { return decode(FeatureMap<double>{in[0], layout}, in[1]); },
          {rand({5, layout.num_frames}, x.rng), rand({5, 2}, x.rng)}, x);
    });
    add("segment", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return segment(in[0], 4, 2).data; },
                        {rand({3, 9}, x.rng)}, x);
    });
    add("merge", [](CaseContext& x, const GradSuiteOptions&) {
      const ChunkLayout layout = plan_chunks(9, 4, 2);
      return check_each(
          [&](const Inputs& in) { return merge(ChunkTensor<double>{in[0], layout}); },
          {rand({3, 4, layout.num_chunks}, x.rng)}, x);
    });
    add("scaled_dot_attention", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each(
          [](const Inputs& in) { return scaled_dot_attention(in[0], in[1], in[2]); },
          {rand({2, 5, 4}, x.rng), rand({2, 5, 4}, x.rng), rand({2, 5, 4}, x.rng)}, x);
    });
    add("multi_head", [](CaseContext& x, const GradSuiteOptions&) {
      const auto params = init_transformer<double>(
          small_transformer(FfnKind::kLinear, NormScope::kSequence), x.rng);
      Inputs inputs{rand({5, 8}, x.rng)};
      const AttentionParams<double>& a = params.attn;
      for (const auto& t : {a.wq, a.bq, a.wk, a.bk, a.wv, a.bv, a.wo, a.bo}) inputs.push_back(t);
      return check_each([&](const Inputs& in) { return multi_head(in[0], a); }, inputs, x);
    });
    for (FfnKind ffn : {FfnKind::kBiLstm, FfnKind::kBiTanh}) {
      add("improved_ffn_" + to_string(ffn), [ffn](CaseContext& x, const GradSuiteOptions&) {
        const auto params =
            init_transformer<double>(small_transformer(ffn, NormScope::kSequence), x.rng);
        Inputs inputs{rand({2, 5, 8}, x.rng)};
        const RecurrentParams<double>& r = params.rnn;
        for (const auto& t : {r.w_ih_fwd, r.w_hh_fwd, r.b_fwd, r.w_ih_bwd, r.w_hh_bwd, r.b_bwd}) {
          inputs.push_back(t);
        }
        inputs.push_back(params.w2);
        inputs.push_back(params.b2);
        return check_each(
            [&](const Inputs& in) { return improved_ffn(in[0], r, params.w2, params.b2); }, inputs,
            x);
      });
    }
    add("transformer", [](CaseContext& x, const GradSuiteOptions&) {
      return check_transformer(small_transformer(FfnKind::kBiLstm, NormScope::kSequence),
                               {2, 5, 8}, x);
    });
    add("transformer_global_norm", [](CaseContext& x, const GradSuiteOptions&) {
      return check_transformer(small_transformer(FfnKind::kBiLstm, NormScope::kGlobal), {2, 5, 8},
                               x);
    });
    add("transformer_linear_ffn", [](CaseContext& x, const GradSuiteOptions&) {
      return check_transformer(small_transformer(FfnKind::kLinear, NormScope::kSequence), {5, 8},
                               x);
    });
    add("dual_path_block", [](CaseContext& x, const GradSuiteOptions&) {
      const TransformerConfig tc = small_transformer(FfnKind::kBiLstm, NormScope::kSequence);
      std::vector<DptBlockParams<double>> blocks{
          {init_transformer<double>(tc, x.rng), init_transformer<double>(tc, x.rng)}};
      const ChunkLayout layout = plan_chunks(8, 4, 2);
      return check_each(
          [&](const Inputs& in) {
            return dpt_stack(ChunkTensor<double>{in[0], layout}, blocks).data;
          },
          {rand({8, 4, layout.num_chunks}, x.rng)}, x);
    });
    add("mask_head", [](CaseContext& x, const GradSuiteOptions&) {
      const ChunkLayout layout = plan_chunks(6, 3, 1);
      // A positive bias keeps the mask ReLU in its linear region.
      return check_each(
          [&](const Inputs& in) {
            auto masks = mask_head(ChunkTensor<double>{in[0], layout}, in[1], in[2], 2);
            return ops::concat_lastdim(masks[0].data, masks[1].data);
          },
          {rand({4, 3, layout.num_chunks}, x.rng), rand({8, 4}, x.rng, -0.2, 0.2),
           rand({8}, x.rng, 1.0, 2.0)},
          x);
    });
    add("si_snr", [](CaseContext& x, const GradSuiteOptions&) {
      const TensorD target = rand({16}, x.rng);
      return check_each([&](const Inputs& in) { return si_snr(in[0], target); },
                        {rand({16}, x.rng)}, x);
    });
    for (int S : {2, 3}) {
      add("upit_loss_s" + std::to_string(S), [S](CaseContext& x, const GradSuiteOptions&) {
        Inputs targets, estimates;
        for (int s = 0; s < S; ++s) targets.push_back(rand({16}, x.rng));
        // Estimates near a shuffled assignment keep the argmax away from ties.
        for (int s = 0; s < S; ++s) {
          estimates.push_back(ops::add(targets[static_cast<std::size_t>((s + 1) % S)],
                                       ops::scale(rand({16}, x.rng), 0.3)));
        }
        return check_each([&](const Inputs& in) { return upit_loss(in, targets).loss; },
                          estimates, x);
      });
    }
    add("separate_upit", [](CaseContext& x, const GradSuiteOptions& o) {
      const SeparatorModel<double> model = model_for(o.model, x.rng);
      const TensorD mixture = rand({o.samples}, x.rng, -0.5, 0.5);
      // Targets are the model's own estimates, rotated and perturbed, so the
      // best permutation wins by a wide margin and stays fixed under the step.
      std::vector<TensorD> targets;
      {
        NoGradScope<double> no_grad;
        const std::vector<TensorD> est = separate(mixture, model);
        for (Index s = 0; s < o.model.sources; ++s) {
          const TensorD& base = est[static_cast<std::size_t>((s + 1) % o.model.sources)];
          double rms = 0.0;
          for (double v : base.data()) rms += v * v;
          rms = std::sqrt(rms / static_cast<double>(base.size()));
          targets.push_back(ops::add(base.detach(), ops::scale(rand({o.samples}, x.rng), 0.5 * rms)));
        }
      }
      auto loss = [&](const TensorD&) { return upit_loss(separate(mixture, model), targets).loss; };
      GradCheckOptions sampled = x.check;
      sampled.max_coords = o.coords_per_tensor;
      GradCheckReport worst = grad_check_report(loss, mixture, sampled);
      Index checked = worst.checked;
      for (const auto& p : model.named_parameters()) {
        sampled.seed = x.rng();
        const GradCheckReport rep = grad_check_report(loss, p.tensor, sampled);
        checked += rep.checked;
            if (rep.max_rel_error > worst.max_rel_error) worst = rep;
      }
      worst.checked = checked;
          return worst;
    });
    return c;
  }();
  return cases;
}

}  // namespace

SeparatorConfig toy_grad_config() {
  SeparatorConfig c;
  c.n_filters = 8;
  c.frame_len = 2;
  c.blocks = 1;
  c.heads = 2;
  c.chunk_len = 4;
  c.sources = 2;
  return c;
}

std::vector<std::string> gradient_case_names(bool inject_bug) {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  if (inject_bug) names.emplace_back("forced_bug");
  return names;
}

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options,
                                   const GradCaseCallback& on_result) {
  if (options.seeds < 1) throw ConfigError("gradient suite: need at least one seed");
  options.model.validate();
  std::vector<std::pair<std::string, CaseFn>> cases = registry();
  if (options.inject_bug) {
    cases.emplace_back("forced_bug", [](CaseContext& x, const GradSuiteOptions&) {
      return check_each([](const Inputs& in) { return broken_square(in[0]); },
                        {rand_away_from_zero({3, 4}, x.rng)}, x);
    });
  }
  GradSuiteReport report;
  for (const auto& [name, fn] : cases) {
    for (int k = 0; k < options.seeds; ++k) {
      const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(k);
      GradCheckOptions check;
      check.eps = options.eps;
      check.seed = seed;
      check.freeze_relu = options.freeze_relu && name != "relu";
      CaseContext ctx{Rng(seed), check};
      GradCaseResult r{name, seed, fn(ctx, options), false};
      r.passed = r.report.max_rel_error < options.tolerance;
      report.passed = report.passed && r.passed;
      if (report.worst_case.empty() || r.report.max_rel_error > report.worst_error) {
        report.worst_error = r.report.max_rel_error;
        report.worst_case = name;
      }
      if (on_result) on_result(r);
      report.checked += r.report.checked;
      report.results.push_back(std::move(r));
    }
  }
  return report;
}

}  // namespace dptnet
