// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dptnet/dual_path.h"
#include "dptnet/numerics/parameters.h"
#include "dptnet/numerics/tensor.h"

namespace dptnet {

// ---- objective ----

// Stabiliser of the SI-SNR ratio and of its logarithm.
inline constexpr double kSiSnrEps = 1e-8;

// Scale-invariant SNR in dB of `estimate` against `target`, both mean-removed:
//   s = <e, x> x / |x|^2,  n = e - s,
//   SI-SNR = 10 log10(|s|^2 / (|n|^2 + eps |e|^2) + eps).
// The eps term is proportional to the estimate energy, so the value is
// exactly invariant to rescaling the estimate and saturates at 80 dB for a
// perfect estimate (-80 dB for an orthogonal one).
// Throws DimensionError on a length mismatch and ContractError when fewer
// than two samples are given or the target is constant.
template <typename T>
double si_snr_value(std::span<const T> estimate, std::span<const T> target);

// Differentiable w.r.t. `estimate`; returns a rank-0 tensor.
template <typename T>
Tensor<T> si_snr(const Tensor<T>& estimate, const Tensor<T>& target);

struct Assignment {
  std::vector<int> permutation;  // permutation[s] = estimate assigned to target s
  double mean_score = 0.0;
};

// Brute-force best assignment from a row-major [estimate x target] score
// matrix. Ties go to the lexicographically smallest permutation.
Assignment best_assignment(const std::vector<double>& scores, int sources);

template <typename T>
struct UpitResult {
  Tensor<T> loss;                 // -mean_s SI-SNR(estimate[perm[s]], target[s])
  std::vector<int> permutation;   // perm[s] = estimate assigned to target s
  std::vector<double> pair_snr;   // [estimate * S + target]
};

// Utterance-level PIT over all S! assignments (S <= 4). Ties go to the
// lexicographically smallest permutation.
template <typename T>
UpitResult<T> upit_loss(const std::vector<Tensor<T>>& estimates,
                        const std::vector<Tensor<T>>& targets);

// ---- optimisation ----

struct ScheduleConfig {
  double k1 = 0.2;
  double k2 = 4e-4;
  Index warmup_n = 4000;
  Index d_model = 64;
  double decay = 0.98;
  int decay_every = 2;  // epochs

  void validate() const;
};

// k1 * d_model^-0.5 * n * warmup_n^-1.5 for n <= warmup_n, otherwise
// k2 * decay^(epoch / decay_every) with integer division. n counts from 1.
double lr_at(Index n, int epoch, const ScheduleConfig& cfg);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptState {
  AdamConfig config;
  Index step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

template <typename T>
OptState<T> make_opt_state(const ParameterList<T>& params, const AdamConfig& config = {});

// One bias-corrected Adam update using the gradients stored on `params`.
// Parameters without a gradient buffer are treated as having zero gradient.
template <typename T>
void adam_step(const ParameterList<T>& params, OptState<T>& state, double lr);

// Rescales all gradients by max_norm / norm when the global L2 norm is
// strictly greater than max_norm. Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const ParameterList<T>& params, double max_norm);

template <typename T>
double global_grad_norm(const ParameterList<T>& params);

// Stops after `patience` consecutive epochs without a strict decrease of the
// validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Returns true when training should stop.
  bool update(double val_loss);
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  bool improved() const { return stale_ == 0; }

 private:
  int patience_;
  int stale_ = 0;
  int seen_ = 0;
  int best_epoch_ = -1;
  double best_ = 0.0;
};

// ---- data ----

template <typename T>
struct MixtureExample {
  Tensor<T> mixture;
  std::vector<Tensor<T>> sources;  // mixture == sum of sources
  double snr_db = 0.0;
  int sample_rate = kDefaultSampleRate;
};

template <typename T>
using Dataset = std::vector<MixtureExample<T>>;

// Mean power (mean square).
template <typename T>
double signal_power(std::span<const T> x);

// Rescales s2 so that 10 log10(P(s1) / P(s2')) == snr_db and sums.
template <typename T>
MixtureExample<T> mix_at_snr(const Tensor<T>& s1, const Tensor<T>& s2, double snr_db,
                             int sample_rate = kDefaultSampleRate);

struct SynthConfig {
  std::uint64_t seed = 0;
  Index count = 8;
  double duration_s = 0.5;
  int sample_rate = kDefaultSampleRate;
  double snr_low_db = 0.0;
  double snr_high_db = 5.0;
};

// Two synthetic "speakers": harmonic tones with a slow pitch glide and a
// syllable-rate envelope. Speaker 0 has fundamentals in 100-180 Hz and three
// harmonics; speaker 1 has fundamentals in 700-1100 Hz and two harmonics.
// Mixed at SNR ~ U(snr_low_db, snr_high_db). Deterministic per seed.
template <typename T>
Dataset<T> synth_batch(const SynthConfig& config);

// ---- training ----

struct TrainConfig {
  int epochs = 100;
  int patience = 10;
  Index batch_size = 2;
  double clip_norm = 5.0;
  ScheduleConfig schedule;
  AdamConfig adam;
  Index max_steps = 0;        // 0: no limit
  Index segment_samples = 0;  // >0: train on random crops of this length
  std::uint64_t seed = 0;     // shuffling and cropping
  bool restore_best = true;   // reload the best validation parameters at the end
};

struct EpochRecord {
  int epoch = 0;
  Index steps = 0;   // total optimizer steps so far
  double lr = 0.0;   // learning rate of the last step
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a validation set
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_lrs;
  std::vector<double> step_losses;
  bool early_stopped = false;
  int best_epoch = -1;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Per step: separate, uPIT loss averaged over the batch, backward, clip,
// Adam at lr_at(n, epoch). Throws NumericalError on a non-finite loss.
template <typename T>
TrainHistory train_loop(SeparatorModel<T>& model, const Dataset<T>& train, const Dataset<T>& valid,
                        const TrainConfig& config, const EpochCallback& on_epoch = {});

// Mean uPIT loss without recording gradients.
template <typename T>
double dataset_loss(const SeparatorModel<T>& model, const Dataset<T>& data);

struct EvalResult {
  double mean_si_snr = 0.0;
  double mean_si_snri = 0.0;
  std::vector<double> si_snr;   // per example, averaged over sources
  std::vector<double> si_snri;
};

// Scores each source estimate under the best uPIT assignment. SI-SNRi
// subtracts the score of the unprocessed mixture against the same target.
EvalResult score_estimates(const std::vector<std::vector<double>>& per_example_si_snr,
                           const std::vector<std::vector<double>>& per_example_baseline);

template <typename T>
void score_example(const std::vector<Tensor<T>>& estimates, const MixtureExample<T>& example,
                   std::vector<double>& si_snr_out, std::vector<double>& baseline_out);

// Runs `threads` workers over the examples; results do not depend on it.
template <typename T>
EvalResult evaluate(const SeparatorModel<T>& model, const Dataset<T>& data, int threads = 1);

}  // namespace dptnet
