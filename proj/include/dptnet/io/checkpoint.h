// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>

#include "dptnet/dual_path.h"
#include "dptnet/io/run_config.h"

namespace dptnet {

// Binary checkpoint, all integers and floats little-endian:
//   magic "DPTNETCK" | u32 version | u32 scalar bytes (4 or 8)
//   u64 config length | config text (RunConfig::to_text)
//   u64 tensor count | per tensor: u32 name length, name, u32 rank,
//   u64 extent x rank, IEEE-754 values in row-major order.
// Layout details live in docs/checkpoint-format.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const SeparatorModel<T>& model,
                     const RunConfig& config);

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  RunConfig config;
};

// Reads the header only.
CheckpointInfo read_checkpoint_info(const std::string& path);

// Loads into precision T, converting if the file was written in the other
// precision. Throws DataError on a bad magic, an unsupported version, or
// parameters that do not match the stored configuration.
template <typename T>
SeparatorModel<T> load_checkpoint(const std::string& path, RunConfig* config = nullptr);

}  // namespace dptnet
