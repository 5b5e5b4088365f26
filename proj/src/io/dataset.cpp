// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/io/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "dptnet/error.h"
#include "dptnet/io/wav.h"

namespace dptnet {

namespace fs = std::filesystem;

template <typename T>
Dataset<T> load_wav_dataset(const std::string& dir, int sources, int sample_rate) {
  const fs::path root(dir);
  const fs::path mix_dir = root / "mix";
  if (!fs::is_directory(mix_dir)) throw DataError("'" + mix_dir.string() + "' is not a directory");
  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(mix_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      names.push_back(entry.path().filename());
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DataError("no .wav files in '" + mix_dir.string() + "'");

  auto load = [&](const fs::path& path) {
    if (!fs::exists(path)) throw DataError("missing '" + path.string() + "'");
    Waveform<T> w = read_wav<T>(path.string());
    if (w.sample_rate != sample_rate) {
      throw DataError("'" + path.string() + "' is sampled at " + std::to_string(w.sample_rate) +
                      " Hz, expected " + std::to_string(sample_rate));
    }
    return w.samples;
  };
  Dataset<T> out;
  for (const auto& name : names) {
    MixtureExample<T> ex;
    ex.mixture = load(mix_dir / name);
    ex.sample_rate = sample_rate;
    for (int s = 1; s <= sources; ++s) {
      Tensor<T> src = load(root / ("s" + std::to_string(s)) / name);
      if (src.size() != ex.mixture.size()) {
        throw DataError("'" + name.string() + "': source " + std::to_string(s) + " has " +
                        std::to_string(src.size()) + " samples, mixture has " +
                        std::to_string(ex.mixture.size()));
      }
      ex.sources.push_back(src);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

template <typename T>
void save_wav_dataset(const std::string& dir, const Dataset<T>& data) {
  const fs::path root(dir);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.wav", i);
    const MixtureExample<T>& ex = data[i];
    fs::create_directories(root / "mix");
    write_wav((root / "mix" / name).string(), Waveform<T>{ex.mixture, ex.sample_rate});
    for (std::size_t s = 0; s < ex.sources.size(); ++s) {
      const fs::path sub = root / ("s" + std::to_string(s + 1));
      fs::create_directories(sub);
      write_wav((sub / name).string(), Waveform<T>{ex.sources[s], ex.sample_rate});
    }
  }
}

template <typename T>
void split_dataset(const Dataset<T>& all, double valid_fraction, Dataset<T>& train,
                   Dataset<T>& valid) {
  const auto n = all.size();
  auto n_valid = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n)));
  n_valid = std::min(n_valid, n > 0 ? n - 1 : 0);
  train.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_valid));
  valid.assign(all.end() - static_cast<std::ptrdiff_t>(n_valid), all.end());
}

#define DPTNET_INSTANTIATE_DATASET(T)                                             \
  template Dataset<T> load_wav_dataset(const std::string&, int, int);            \
  template void save_wav_dataset(const std::string&, const Dataset<T>&);         \
  template void split_dataset(const Dataset<T>&, double, Dataset<T>&, Dataset<T>&);

DPTNET_INSTANTIATE_DATASET(float)
DPTNET_INSTANTIATE_DATASET(double)

}  // namespace dptnet
