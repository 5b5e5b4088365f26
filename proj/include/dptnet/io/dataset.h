// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "dptnet/training.h"

namespace dptnet {

// A directory of WAV triples: <dir>/mix/<name>.wav with the reference
// sources in <dir>/s1/<name>.wav ... <dir>/sS/<name>.wav. Examples are
// ordered by file name. Throws DataError on missing partners, length or
// sample-rate mismatches.
template <typename T>
Dataset<T> load_wav_dataset(const std::string& dir, int sources, int sample_rate);

// Writes the same layout; used to export synthetic data.
template <typename T>
void save_wav_dataset(const std::string& dir, const Dataset<T>& data);

// The last round(fraction * size) examples become the validation split.
template <typename T>
void split_dataset(const Dataset<T>& all, double valid_fraction, Dataset<T>& train,
                   Dataset<T>& valid);

}  // namespace dptnet
