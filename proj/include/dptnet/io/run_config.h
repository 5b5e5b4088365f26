// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>

#include "dptnet/dual_path.h"
#include "dptnet/training.h"

namespace dptnet {

enum class Precision { kF32, kF64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& text);

// Every hyperparameter of a run. Serialized as plain-text `key = value`
// lines; '#' starts a comment. Defaults are the full-size recipe.
struct RunConfig {
  SeparatorConfig model;
  Precision precision = Precision::kF32;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string data = "synthetic";  // or a directory of WAV triples

  ScheduleConfig schedule;  // d_model follows model.n_filters
  AdamConfig adam;
  int epochs = 100;
  int patience = 10;
  Index batch_size = 2;
  double clip_norm = 5.0;
  Index max_steps = 0;
  Index segment_samples = 32000;  // 4 s at 8 kHz
  bool restore_best = true;

  // Synthetic data.
  Index synth_train = 100;
  Index synth_valid = 20;
  double synth_duration = 0.5;
  double snr_low_db = 0.0;
  double snr_high_db = 5.0;

  // Share of a WAV directory held out for validation.
  double valid_fraction = 0.1;

  // Throws ConfigError naming the offending key.
  void validate() const;

  TrainConfig train_config() const;
  SynthConfig synth_config(Index count, std::uint64_t seed_offset) const;

  // Canonical text: every key in a fixed order, shortest round-trip numbers.
  // parse(to_text()) reproduces the config exactly.
  std::string to_text() const;

  // Keys not present keep their defaults. Unknown or repeated keys and
  // malformed values throw ConfigError with the line number.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace dptnet
