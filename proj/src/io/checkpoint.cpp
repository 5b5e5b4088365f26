// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/io/checkpoint.h"

#include <array>
#include <bit>
#include <fstream>

#include "dptnet/error.h"

namespace dptnet {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'P', 'T', 'N', 'E', 'T', 'C', 'K'};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw DataError("cannot write checkpoint '" + path + "'");
  }
  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  template <typename U>
  void uint(U v) {
    std::array<unsigned char, sizeof(U)> b{};
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b.data(), b.size());
  }
  void str(const std::string& s, bool wide) {
    if (wide) {
      uint<std::uint64_t>(s.size());
    } else {
      uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    }
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw DataError("failed writing checkpoint '" + path_ + "'");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot read checkpoint '" + path + "'");
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DataError("checkpoint '" + path_ + "' is truncated");
    }
  }
  template <typename U>
  U uint() {
    std::array<unsigned char, sizeof(U)> b{};
    bytes(b.data(), b.size());
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
  }
  std::string str(bool wide, std::uint64_t limit) {
    const std::uint64_t n = wide ? uint<std::uint64_t>() : uint<std::uint32_t>();
    if (n > limit) throw DataError("checkpoint '" + path_ + "' has an oversized field");
    std::string s(static_cast<std::size_t>(n), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  const std::string& path() const { return path_; }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::string path_;
};

CheckpointInfo read_header(Reader& r) {
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw DataError("'" + r.path() + "' is not a dptnet checkpoint");
  CheckpointInfo info;
  info.version = r.uint<std::uint32_t>();
  if (info.version != kCheckpointVersion) {
    throw DataError("checkpoint '" + r.path() + "' has version " + std::to_string(info.version) +
                    ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  info.scalar_bytes = r.uint<std::uint32_t>();
  if (info.scalar_bytes != 4 && info.scalar_bytes != 8) {
    throw DataError("checkpoint '" + r.path() + "' has unsupported scalar width " +
                    std::to_string(info.scalar_bytes));
  }
  const std::string text = r.str(true, 1u << 20);
  try {
    info.config = RunConfig::parse(text);
  } catch (const ConfigError& e) {
    throw DataError("checkpoint '" + r.path() + "' has an invalid config: " + e.what());
  }
  return info;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const SeparatorModel<T>& model,
                     const RunConfig& config) {
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(sizeof(T));
  w.str(config.to_text(), true);
  const ParameterList<T> params = model.named_parameters();
  w.uint<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.str(p.name, false);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.rank()));
    for (Index d : p.tensor.shape()) w.uint<std::uint64_t>(static_cast<std::uint64_t>(d));
    for (T v : p.tensor.data()) {
      if constexpr (sizeof(T) == 4) {
        w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
      } else {
        w.uint<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  w.finish();
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  Reader r(path);
  return read_header(r);
}

template <typename T>
SeparatorModel<T> load_checkpoint(const std::string& path, RunConfig* config) {
  Reader r(path);
  const CheckpointInfo info = read_header(r);
  SeparatorModel<T> model = init_model<T>(info.config.model, 0);
  const ParameterList<T> params = model.named_parameters();
  const std::uint64_t count = r.uint<std::uint64_t>();
  if (count != params.size()) {
    throw DataError("checkpoint '" + path + "' holds " + std::to_string(count) +
                    " tensors, the configuration needs " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = r.str(false, 4096);
    if (name != p.name) {
      throw DataError("checkpoint '" + path + "': expected tensor '" + p.name + "', found '" +
                      name + "'");
    }
    const std::uint32_t rank = r.uint<std::uint32_t>();
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<Index>(r.uint<std::uint64_t>()));
    if (shape != p.tensor.shape()) {
      throw DataError("checkpoint '" + path + "': tensor '" + name + "' has shape " +
                      shape_str(shape) + ", expected " + shape_str(p.tensor.shape()));
    }
    Tensor<T> t = p.tensor;
    for (T& v : t.mutable_data()) {
      if (info.scalar_bytes == 4) {
        v = static_cast<T>(std::bit_cast<float>(r.uint<std::uint32_t>()));
      } else {
        v = static_cast<T>(std::bit_cast<double>(r.uint<std::uint64_t>()));
      }
    }
  }
  if (!r.at_end()) throw DataError("checkpoint '" + path + "' has trailing bytes");
  if (config != nullptr) *config = info.config;
  return model;
}

template void save_checkpoint(const std::string&, const SeparatorModel<float>&, const RunConfig&);
template void save_checkpoint(const std::string&, const SeparatorModel<double>&, const RunConfig&);
template SeparatorModel<float> load_checkpoint(const std::string&, RunConfig*);
template SeparatorModel<double> load_checkpoint(const std::string&, RunConfig*);

}  // namespace dptnet
