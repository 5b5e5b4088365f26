// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "dptnet/frames.h"

namespace dptnet {

// 16-bit PCM mono RIFF/WAVE. Samples map to [-1, 1] by a factor of 1/32767.

// Throws DataError for unreadable files, other encodings or channel counts.
template <typename T>
Waveform<T> read_wav(const std::string& path);

// Clips to [-1, 1] and rounds to the nearest 16-bit level. Returns the
// number of clipped samples.
template <typename T>
Index write_wav(const std::string& path, const Waveform<T>& wave);

}  // namespace dptnet
