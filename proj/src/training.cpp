// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/training.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>

#include "dptnet/error.h"
#include "dptnet/numerics/ops.h"
#include "dptnet/numerics/tape.h"

namespace dptnet {

namespace {

// Mean-removed copy in double precision.
template <typename T>
std::vector<double> centered(std::span<const T> x) {
  double mean = 0.0;
  for (T v : x) mean += static_cast<double>(v);
  mean /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(x[i]) - mean;
  return out;
}

struct SiSnrTerms {
  std::vector<double> e;  // centered estimate
  std::vector<double> x;  // centered target
  double dot = 0.0;       // <e, x>
  double target_energy = 0.0;
  double estimate_energy = 0.0;
  double signal = 0.0;  // |s|^2
  double denom = 0.0;   // |n|^2 + eps |e|^2
  double ratio = 0.0;
  double value = 0.0;
};

template <typename T>
SiSnrTerms si_snr_terms(std::span<const T> estimate, std::span<const T> target) {
  if (estimate.size() != target.size()) {
    throw DimensionError("si_snr: estimate has " + std::to_string(estimate.size()) +
                         " samples, target has " + std::to_string(target.size()));
  }
  if (target.size() < 2) throw ContractError("si_snr: need at least two samples");
  SiSnrTerms t;
  t.e = centered(estimate);
  t.x = centered(target);
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    t.dot += t.e[i] * t.x[i];
    t.target_energy += t.x[i] * t.x[i];
    t.estimate_energy += t.e[i] * t.e[i];
  }
  if (t.target_energy == 0.0) throw ContractError("si_snr: target is constant");
  const double alpha = t.dot / t.target_energy;
  double noise = 0.0;
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    const double s = alpha * t.x[i];
    const double n = t.e[i] - s;
    t.signal += s * s;
    noise += n * n;
  }
  t.denom = std::max(noise + kSiSnrEps * t.estimate_energy, std::numeric_limits<double>::min());
  t.ratio = t.signal / t.denom;
  t.value = 10.0 * std::log10(t.ratio + kSiSnrEps);
  return t;
}

// Sequential permutations of [0, n) via Fisher-Yates on the portable draw.
std::vector<Index> shuffled(Index n, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(uniform(rng, 0.0, static_cast<double>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(std::min(j, i))]);
  }
  return order;
}

template <typename T>
Tensor<T> slice_samples(const Tensor<T>& x, Index begin, Index count) {
  std::vector<T> out(x.data().begin() + begin, x.data().begin() + begin + count);
  return Tensor<T>({count}, std::move(out));
}

template <typename T>
MixtureExample<T> random_crop(const MixtureExample<T>& ex, Index length, Rng& rng) {
  const Index total = ex.mixture.size();
  if (length <= 0 || total <= length) return ex;
  const auto begin = std::min(static_cast<Index>(uniform(rng, 0.0, static_cast<double>(total - length + 1))),
                              total - length);
  MixtureExample<T> out{slice_samples(ex.mixture, begin, length), {}, ex.snr_db, ex.sample_rate};
  for (const auto& s : ex.sources) out.sources.push_back(slice_samples(s, begin, length));
  return out;
}

template <typename T>
Tensor<T> harmonic_source(Rng& rng, double f0_lo, double f0_hi, int harmonics, Index samples,
                          int sample_rate) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double duration = static_cast<double>(samples) / sample_rate;
  const double f0 = uniform(rng, f0_lo, f0_hi);
  const double glide = uniform(rng, -0.15, 0.15);
  const double env_rate = uniform(rng, 2.0, 5.0);
  const double env_phase = uniform(rng, 0.0, two_pi);
  std::vector<double> amp(static_cast<std::size_t>(harmonics)), phase(amp.size());
  for (int k = 0; k < harmonics; ++k) {
    amp[static_cast<std::size_t>(k)] = uniform(rng, 0.5, 1.0) / (k + 1);
    phase[static_cast<std::size_t>(k)] = uniform(rng, 0.0, two_pi);
  }
  std::vector<double> y(static_cast<std::size_t>(samples));
  double peak = 0.0;
  for (Index i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    // Phase of a linear glide from f0 to f0 * (1 + glide) over the clip.
    const double base = two_pi * f0 * (t + glide * t * t / (2.0 * duration));
    double v = 0.0;
    for (int k = 0; k < harmonics; ++k) {
      v += amp[static_cast<std::size_t>(k)] * std::sin((k + 1) * base + phase[static_cast<std::size_t>(k)]);
    }
    v *= 0.55 + 0.45 * std::sin(two_pi * env_rate * t + env_phase);
    y[static_cast<std::size_t>(i)] = v;
    peak = std::max(peak, std::abs(v));
  }
  std::vector<T> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<T>(0.5 * y[i] / peak);
  return Tensor<T>({samples}, std::move(out));
}

}  // namespace

// ---- objective ----

template <typename T>
double si_snr_value(std::span<const T> estimate, std::span<const T> target) {
  return si_snr_terms(estimate, target).value;
}

template <typename T>
Tensor<T> si_snr(const Tensor<T>& estimate, const Tensor<T>& target) {
  if (estimate.rank() != 1 || target.rank() != 1) {
    throw DimensionError("si_snr: expected 1-D waveforms, got " + shape_str(estimate.shape()) +
                         " and " + shape_str(target.shape()));
  }
  auto terms = std::make_shared<SiSnrTerms>(si_snr_terms(estimate.data(), target.data()));
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(terms->value));
  record_op(out, {estimate}, [estimate, out, terms]() mutable {
    const SiSnrTerms& t = *terms;
    if (t.estimate_energy == 0.0) return;
    const double g = static_cast<double>(out.grad()[0]) * 10.0 /
                     (std::numbers::ln10 * (t.ratio + kSiSnrEps));
    const double inv_d = 1.0 / t.denom;
    const double s_over_d2 = t.signal * inv_d * inv_d;
    // dR/de = dS/de (1/D + S/D^2) - S/D^2 (1 + eps) 2e,  dS/de = 2 <e,x> x / |x|^2.
    const double cx = 2.0 * t.dot / t.target_energy * (inv_d + s_over_d2);
    const double ce = 2.0 * (1.0 + kSiSnrEps) * s_over_d2;
    std::vector<double> ge(t.e.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < ge.size(); ++i) {
      ge[i] = g * (cx * t.x[i] - ce * t.e[i]);
      mean += ge[i];
    }
    mean /= static_cast<double>(ge.size());
    auto buf = estimate.grad_buffer();
    for (std::size_t i = 0; i < ge.size(); ++i) buf[i] += static_cast<T>(ge[i] - mean);
  });
  return out;
}

Assignment best_assignment(const std::vector<double>& scores, int sources) {
  if (sources < 1) throw ContractError("best_assignment: need at least one source");
  if (scores.size() != static_cast<std::size_t>(sources * sources)) {
    throw DimensionError("best_assignment: score matrix size " + std::to_string(scores.size()) +
                         " does not match " + std::to_string(sources) + " sources");
  }
  std::vector<int> perm(static_cast<std::size_t>(sources));
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best;
  best.mean_score = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int s = 0; s < sources; ++s) total += scores[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)] * sources + s)];
    const double mean = total / sources;
    if (best.permutation.empty() || mean > best.mean_score) {
      best.mean_score = mean;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

template <typename T>
UpitResult<T> upit_loss(const std::vector<Tensor<T>>& estimates,
                        const std::vector<Tensor<T>>& targets) {
  const int S = static_cast<int>(targets.size());
  if (static_cast<int>(estimates.size()) != S) {
    throw DimensionError("upit_loss: " + std::to_string(estimates.size()) + " estimates for " +
                         std::to_string(S) + " targets");
  }
  if (S < 1 || S > 4) throw ContractError("upit_loss: source count must be in [1, 4]");
  UpitResult<T> result;
  result.pair_snr.resize(static_cast<std::size_t>(S * S));
  for (int e = 0; e < S; ++e) {
    for (int t = 0; t < S; ++t) {
      result.pair_snr[static_cast<std::size_t>(e * S + t)] =
          si_snr_value<T>(estimates[static_cast<std::size_t>(e)].data(), targets[static_cast<std::size_t>(t)].data());
    }
  }
  result.permutation = best_assignment(result.pair_snr, S).permutation;
  // Matched pairs are summed in ascending score order, so reordering the
  // estimates or the targets leaves the loss bit-identical.
  std::vector<int> order(static_cast<std::size_t>(S));
  std::iota(order.begin(), order.end(), 0);
  auto pair_score = [&](int t) {
    return result.pair_snr[static_cast<std::size_t>(result.permutation[static_cast<std::size_t>(t)] * S + t)];
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pair_score(a) < pair_score(b); });
  Tensor<T> total;
  for (int t : order) {
    Tensor<T> term = si_snr(estimates[static_cast<std::size_t>(result.permutation[static_cast<std::size_t>(t)])],
                            targets[static_cast<std::size_t>(t)]);
    total = total.defined() ? ops::add(total, term) : term;
  }
  result.loss = ops::scale(total, static_cast<T>(-1.0 / S));
  return result;
}

// ---- optimisation ----

void ScheduleConfig::validate() const {
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw ConfigError("schedule: k1 and k2 must be positive");
  if (warmup_n < 1) throw ConfigError("schedule: warmup_n must be at least 1");
  if (d_model < 1) throw ConfigError("schedule: d_model must be positive");
  if (!(decay > 0.0)) throw ConfigError("schedule: decay must be positive");
  if (decay_every < 1) throw ConfigError("schedule: decay_every must be at least 1");
}

double lr_at(Index n, int epoch, const ScheduleConfig& cfg) {
  if (n < 1) throw ContractError("lr_at: step counts from 1");
  if (n <= cfg.warmup_n) {
    return cfg.k1 / std::sqrt(static_cast<double>(cfg.d_model)) * static_cast<double>(n) *
           std::pow(static_cast<double>(cfg.warmup_n), -1.5);
  }
  return cfg.k2 * std::pow(cfg.decay, static_cast<double>(std::max(epoch, 0) / cfg.decay_every));
}

template <typename T>
OptState<T> make_opt_state(const ParameterList<T>& params, const AdamConfig& config) {
  OptState<T> state;
  state.config = config;
  for (const auto& p : params) {
    state.m.emplace_back(static_cast<std::size_t>(p.tensor.size()), T(0));
    state.v.emplace_back(static_cast<std::size_t>(p.tensor.size()), T(0));
  }
  return state;
}

template <typename T>
void adam_step(const ParameterList<T>& params, OptState<T>& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state has " + std::to_string(state.m.size()) +
                         " slots for " + std::to_string(params.size()) + " parameters");
  }
  state.step += 1;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].tensor;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != static_cast<std::size_t>(p.size()) || v.size() != m.size()) {
      throw DimensionError("adam_step: state for '" + params[i].name + "' has " +
                           std::to_string(m.size()) + " entries, parameter " +
                           shape_str(p.shape()));
    }
    const bool has_grad = p.has_grad();
    auto w = p.mutable_data();
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = has_grad ? static_cast<double>(p.grad()[j]) : 0.0;
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * g;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double step = lr * (mj / bc1) / (std::sqrt(vj / bc2) + c.eps);
      w[j] = static_cast<T>(static_cast<double>(w[j]) - step);
    }
  }
}

template <typename T>
double global_grad_norm(const ParameterList<T>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

template <typename T>
double clip_grad_norm(const ParameterList<T>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_grad_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (T& g : p.tensor.grad_buffer()) g = static_cast<T>(static_cast<double>(g) * factor);
    }
  }
  return norm;
}

bool EarlyStopping::update(double val_loss) {
  if (seen_ == 0 || val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = seen_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  ++seen_;
  return stale_ >= patience_;
}

// ---- data ----

template <typename T>
double signal_power(std::span<const T> x) {
  if (x.empty()) return 0.0;
  double sq = 0.0;
  for (T v : x) sq += static_cast<double>(v) * static_cast<double>(v);
  return sq / static_cast<double>(x.size());
}

template <typename T>
MixtureExample<T> mix_at_snr(const Tensor<T>& s1, const Tensor<T>& s2, double snr_db,
                             int sample_rate) {
  if (s1.rank() != 1 || s2.rank() != 1 || s1.size() != s2.size()) {
    throw DimensionError("mix_at_snr: sources " + shape_str(s1.shape()) + " and " +
                         shape_str(s2.shape()) + " differ");
  }
  const double p1 = signal_power<T>(s1.data()), p2 = signal_power<T>(s2.data());
  if (p1 == 0.0 || p2 == 0.0) throw ContractError("mix_at_snr: zero-power source");
  const double gain = std::sqrt(p1 / (p2 * std::pow(10.0, snr_db / 10.0)));
  Tensor<T> scaled(s2.shape());
  Tensor<T> mixture(s1.shape());
  for (Index i = 0; i < s1.size(); ++i) {
    scaled.mutable_data()[static_cast<std::size_t>(i)] = static_cast<T>(static_cast<double>(s2[i]) * gain);
    mixture.mutable_data()[static_cast<std::size_t>(i)] = s1[i] + scaled[i];
  }
  return MixtureExample<T>{mixture, {s1.detach(), scaled}, snr_db, sample_rate};
}

template <typename T>
Dataset<T> synth_batch(const SynthConfig& config) {
  if (config.count < 0) throw ContractError("synth_batch: negative count");
  if (config.sample_rate <= 0) throw ContractError("synth_batch: sample rate must be positive");
  const auto samples = static_cast<Index>(std::llround(config.duration_s * config.sample_rate));
  if (samples < 2) throw ContractError("synth_batch: duration shorter than two samples");
  Rng rng(config.seed);
  Dataset<T> out;
  for (Index i = 0; i < config.count; ++i) {
    Tensor<T> low = harmonic_source<T>(rng, 100.0, 180.0, 3, samples, config.sample_rate);
    Tensor<T> high = harmonic_source<T>(rng, 700.0, 1100.0, 2, samples, config.sample_rate);
    const double snr = uniform(rng, config.snr_low_db, config.snr_high_db);
    const bool swap = uniform(rng, 0.0, 1.0) < 0.5;
    MixtureExample<T> ex = swap ? mix_at_snr(high, low, snr, config.sample_rate)
                                : mix_at_snr(low, high, snr, config.sample_rate);
    // Keep the mixture inside [-0.9, 0.9] without changing the SNR.
    double peak = 0.0;
    for (T v : ex.mixture.data()) peak = std::max(peak, std::abs(static_cast<double>(v)));
    if (peak > 0.9) {
      const double g = 0.9 / peak;
      for (auto& s : ex.sources) {
        for (T& v : s.mutable_data()) v = static_cast<T>(static_cast<double>(v) * g);
      }
      for (Index j = 0; j < samples; ++j) {
        ex.mixture.mutable_data()[static_cast<std::size_t>(j)] = ex.sources[0][j] + ex.sources[1][j];
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- training ----

template <typename T>
double dataset_loss(const SeparatorModel<T>& model, const Dataset<T>& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  NoGradScope<T> no_grad;
  double total = 0.0;
  for (const auto& ex : data) {
    total += static_cast<double>(upit_loss(separate(ex.mixture, model), ex.sources).loss.item());
  }
  return total / static_cast<double>(data.size());
}

template <typename T>
TrainHistory train_loop(SeparatorModel<T>& model, const Dataset<T>& train, const Dataset<T>& valid,
                        const TrainConfig& config, const EpochCallback& on_epoch) {
  config.schedule.validate();
  if (train.empty()) throw DataError("train_loop: empty training set");
  if (config.batch_size < 1) throw ConfigError("train_loop: batch_size must be at least 1");
  if (!(config.clip_norm > 0.0)) throw ConfigError("train_loop: clip_norm must be positive");
  for (const auto& ex : train) {
    if (static_cast<int>(ex.sources.size()) != model.config.sources) {
      throw DataError("train_loop: example has " + std::to_string(ex.sources.size()) +
                      " sources, model expects " + std::to_string(model.config.sources));
    }
  }

  const ParameterList<T> params = model.named_parameters();
  OptState<T> state = make_opt_state(params, config.adam);
  EarlyStopping stopper(config.patience);
  Rng rng(config.seed);
  TrainHistory history;
  std::vector<std::vector<T>> best;
  Index step = 0;
  bool out_of_steps = false;

  for (int epoch = 0; epoch < config.epochs && !out_of_steps; ++epoch) {
    const std::vector<Index> order = shuffled(static_cast<Index>(train.size()), rng);
    double epoch_loss = 0.0;
    Index epoch_steps = 0;
    double lr = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      if (config.max_steps > 0 && step >= config.max_steps) {
        out_of_steps = true;
        break;
      }
      ++step;
      lr = lr_at(step, epoch, config.schedule);
      zero_grads(params);
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      Tape<T> tape;
      double loss_value = 0.0;
      {
        TapeScope<T> scope(&tape);
        Tensor<T> total;
        for (std::size_t k = begin; k < end; ++k) {
          const MixtureExample<T> ex =
              random_crop(train[static_cast<std::size_t>(order[k])], config.segment_samples, rng);
          Tensor<T> loss = upit_loss(separate(ex.mixture, model), ex.sources).loss;
          total = total.defined() ? ops::add(total, loss) : loss;
        }
        Tensor<T> mean = ops::scale(total, static_cast<T>(1.0 / static_cast<double>(end - begin)));
        loss_value = static_cast<double>(mean.item());
        if (!std::isfinite(loss_value)) {
          throw NumericalError("train_loop: non-finite loss at step " + std::to_string(step) +
                               ", epoch " + std::to_string(epoch));
        }
        tape.backward(mean);
      }
      clip_grad_norm(params, config.clip_norm);
      adam_step(params, state, lr);
      history.step_lrs.push_back(lr);
      history.step_losses.push_back(loss_value);
      epoch_loss += loss_value;
      ++epoch_steps;
    }
    if (epoch_steps == 0) break;

    EpochRecord record{epoch, step, lr, epoch_loss / static_cast<double>(epoch_steps),
                       dataset_loss(model, valid)};
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (!valid.empty()) {
      const bool stop = stopper.update(record.val_loss);
      if (stopper.improved()) {
        history.best_epoch = epoch;
        if (config.restore_best) {
          best.clear();
          for (const auto& p : params) best.push_back(p.tensor.to_vector());
        }
      }
      if (stop) {
        history.early_stopped = true;
        break;
      }
    }
  }
  if (config.restore_best && !best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T> p = params[i].tensor;
      std::copy(best[i].begin(), best[i].end(), p.mutable_data().begin());
    }
  }
  return history;
}

template <typename T>
void score_example(const std::vector<Tensor<T>>& estimates, const MixtureExample<T>& example,
                   std::vector<double>& si_snr_out, std::vector<double>& baseline_out) {
  const int S = static_cast<int>(example.sources.size());
  if (static_cast<int>(estimates.size()) != S) {
    throw DimensionError("evaluate: " + std::to_string(estimates.size()) + " estimates for " +
                         std::to_string(S) + " sources");
  }
  std::vector<double> scores(static_cast<std::size_t>(S * S));
  for (int e = 0; e < S; ++e) {
    for (int t = 0; t < S; ++t) {
      scores[static_cast<std::size_t>(e * S + t)] =
          si_snr_value<T>(estimates[static_cast<std::size_t>(e)].data(), example.sources[static_cast<std::size_t>(t)].data());
    }
  }
  const Assignment best = best_assignment(scores, S);
  si_snr_out.clear();
  baseline_out.clear();
  for (int t = 0; t < S; ++t) {
    si_snr_out.push_back(scores[static_cast<std::size_t>(best.permutation[static_cast<std::size_t>(t)] * S + t)]);
    baseline_out.push_back(si_snr_value<T>(example.mixture.data(), example.sources[static_cast<std::size_t>(t)].data()));
  }
}

EvalResult score_estimates(const std::vector<std::vector<double>>& per_example_si_snr,
                           const std::vector<std::vector<double>>& per_example_baseline) {
  if (per_example_si_snr.size() != per_example_baseline.size()) {
    throw DimensionError("score_estimates: mismatched example counts");
  }
  EvalResult r;
  for (std::size_t i = 0; i < per_example_si_snr.size(); ++i) {
    const auto& est = per_example_si_snr[i];
    const auto& base = per_example_baseline[i];
    if (est.size() != base.size() || est.empty()) {
      throw DimensionError("score_estimates: mismatched source counts");
    }
    double s = 0.0, imp = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) {
      s += est[k];
      imp += est[k] - base[k];
    }
    r.si_snr.push_back(s / static_cast<double>(est.size()));
    r.si_snri.push_back(imp / static_cast<double>(est.size()));
  }
  if (!r.si_snr.empty()) {
    const double n = static_cast<double>(r.si_snr.size());
    r.mean_si_snr = std::accumulate(r.si_snr.begin(), r.si_snr.end(), 0.0) / n;
    r.mean_si_snri = std::accumulate(r.si_snri.begin(), r.si_snri.end(), 0.0) / n;
  }
  return r;
}

template <typename T>
EvalResult evaluate(const SeparatorModel<T>& model, const Dataset<T>& data, int threads) {
  const std::size_t n = data.size();
  std::vector<std::vector<double>> scores(n), baselines(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    NoGradScope<T> no_grad;
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        score_example(separate(data[i].mixture, model), data[i], scores[i], baselines[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return score_estimates(scores, baselines);
}

#define DPTNET_INSTANTIATE_TRAINING(T)                                                          \
  template double si_snr_value(std::span<const T>, std::span<const T>);                        \
  template Tensor<T> si_snr(const Tensor<T>&, const Tensor<T>&);                               \
  template UpitResult<T> upit_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&); \
  template OptState<T> make_opt_state(const ParameterList<T>&, const AdamConfig&);             \
  template void adam_step(const ParameterList<T>&, OptState<T>&, double);                      \
  template double global_grad_norm(const ParameterList<T>&);                                   \
  template double clip_grad_norm(const ParameterList<T>&, double);                             \
  template double signal_power(std::span<const T>);                                            \
  template MixtureExample<T> mix_at_snr(const Tensor<T>&, const Tensor<T>&, double, int);      \
  template Dataset<T> synth_batch(const SynthConfig&);                                         \
  template double dataset_loss(const SeparatorModel<T>&, const Dataset<T>&);                   \
  template TrainHistory train_loop(SeparatorModel<T>&, const Dataset<T>&, const Dataset<T>&,   \
                                   const TrainConfig&, const EpochCallback&);                  \
  template void score_example(const std::vector<Tensor<T>>&, const MixtureExample<T>&,         \
                              std::vector<double>&, std::vector<double>&);                     \
  template EvalResult evaluate(const SeparatorModel<T>&, const Dataset<T>&, int);

DPTNET_INSTANTIATE_TRAINING(float)
DPTNET_INSTANTIATE_TRAINING(double)

}  // namespace dptnet
