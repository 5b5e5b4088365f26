// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/io/wav.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

#include "dptnet/error.h"

namespace dptnet {

namespace {

constexpr double kScale = 32767.0;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

template <typename T>
Waveform<T> read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { return DataError("'" + path + "': " + why); };
  if (bytes.size() < 12 || !std::equal(bytes.begin(), bytes.begin() + 4, "RIFF") ||
      !std::equal(bytes.begin() + 8, bytes.begin() + 12, "WAVE")) {
    throw fail("not a RIFF/WAVE file");
  }
  int channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (len > bytes.size() - body) throw fail("truncated chunk");
    if (std::equal(chunk, chunk + 4, "fmt ")) {
      if (len < 16) throw fail("short fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
    } else if (std::equal(chunk, chunk + 4, "data")) {
      data = chunk + 8;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (format == 0) throw fail("missing fmt chunk");
  if (format != 1 || bits != 16) {
    throw fail("expected 16-bit PCM, got format " + std::to_string(format) + " with " +
               std::to_string(bits) + " bits");
  }
  if (channels != 1) throw fail("expected mono, got " + std::to_string(channels) + " channels");
  if (data == nullptr) throw fail("missing data chunk");
  const std::size_t n = data_len / 2;
  if (n == 0) throw fail("no samples");
  std::vector<T> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<std::int16_t>(le16(data + 2 * i));
    samples[i] = static_cast<T>(v / kScale);
  }
  return {Tensor<T>({static_cast<Index>(n)}, std::move(samples)), static_cast<int>(rate)};
}

template <typename T>
Index write_wav(const std::string& path, const Waveform<T>& wave) {
  if (wave.samples.rank() != 1) {
    throw DimensionError("write_wav: expected a 1-D waveform, got " + shape_str(wave.samples.shape()));
  }
  if (wave.sample_rate <= 0) throw ContractError("write_wav: sample rate must be positive");
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  put_tag(out, "RIFF");
  put32(out, 36 + 2 * n);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, 1);  // PCM
  put16(out, 1);  // mono
  put32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, 2 * n);
  Index clipped = 0;
  for (T v : wave.samples.data()) {
    double x = static_cast<double>(v);
    if (!(x >= -1.0 && x <= 1.0)) {
      ++clipped;
      x = std::isnan(x) ? 0.0 : std::clamp(x, -1.0, 1.0);
    }
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(x * kScale))));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write '" + path + "'");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("failed writing '" + path + "'");
  return clipped;
}

template Waveform<float> read_wav(const std::string&);
template Waveform<double> read_wav(const std::string&);
template Index write_wav(const std::string&, const Waveform<float>&);
template Index write_wav(const std::string&, const Waveform<double>&);

}  // namespace dptnet
