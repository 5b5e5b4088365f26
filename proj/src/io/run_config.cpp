// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/io/run_config.h"

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <system_error>
#include <vector>

#include "dptnet/error.h"

namespace dptnet {

namespace {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("'" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + text + "'");
}

// One accessor pair per key, in serialization order.
struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename N, typename Member>
Field number(const char* key, Member member) {
  return {key,
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<N>) {
              return format_double(std::invoke(member, c));
            } else {
              return std::to_string(std::invoke(member, c));
            }
          },
          [member, key](RunConfig& c, const std::string& v) {
            std::invoke(member, c) = parse_number<N>(key, v);
          }};
}

#define DPTNET_FIELD(type, key, expr)                                     \
  number<type>(key, [](auto& c) -> auto& { return c.expr; })

const std::vector<std::pair<std::string, std::vector<Field>>>& sections() {
  static const std::vector<std::pair<std::string, std::vector<Field>>> s = {
      {"model",
       {DPTNET_FIELD(Index, "n_filters", model.n_filters),
        DPTNET_FIELD(Index, "frame_len", model.frame_len),
        DPTNET_FIELD(Index, "frame_hop", model.frame_hop),
        DPTNET_FIELD(Index, "blocks", model.blocks),
        DPTNET_FIELD(Index, "heads", model.heads),
        DPTNET_FIELD(Index, "d_ff", model.d_ff),
        DPTNET_FIELD(Index, "sources", model.sources),
        DPTNET_FIELD(Index, "chunk_len", model.chunk_len),
        DPTNET_FIELD(Index, "chunk_hop", model.chunk_hop),
        {"ffn", [](const RunConfig& c) { return to_string(c.model.ffn); },
         [](RunConfig& c, const std::string& v) { c.model.ffn = parse_ffn_kind(v); }},
        {"norm", [](const RunConfig& c) { return to_string(c.model.norm); },
         [](RunConfig& c, const std::string& v) { c.model.norm = parse_norm_scope(v); }},
        DPTNET_FIELD(int, "sample_rate", model.sample_rate)}},
      {"run",
       {{"precision", [](const RunConfig& c) { return to_string(c.precision); },
         [](RunConfig& c, const std::string& v) { c.precision = parse_precision(v); }},
        DPTNET_FIELD(std::uint64_t, "seed", seed),
        DPTNET_FIELD(int, "threads", threads),
        {"data", [](const RunConfig& c) { return c.data; },
         [](RunConfig& c, const std::string& v) {
           if (v.empty()) throw ConfigError("'data': empty value");
           c.data = v;
         }}}},
      {"schedule",
       {DPTNET_FIELD(double, "k1", schedule.k1), DPTNET_FIELD(double, "k2", schedule.k2),
        DPTNET_FIELD(Index, "warmup_n", schedule.warmup_n),
        DPTNET_FIELD(double, "decay", schedule.decay),
        DPTNET_FIELD(int, "decay_every", schedule.decay_every)}},
      {"training",
       {DPTNET_FIELD(int, "epochs", epochs), DPTNET_FIELD(int, "patience", patience),
        DPTNET_FIELD(Index, "batch_size", batch_size),
        DPTNET_FIELD(double, "clip_norm", clip_norm),
        DPTNET_FIELD(Index, "max_steps", max_steps),
        DPTNET_FIELD(Index, "segment_samples", segment_samples),
        {"restore_best", [](const RunConfig& c) { return std::string(c.restore_best ? "true" : "false"); },
         [](RunConfig& c, const std::string& v) { c.restore_best = parse_bool("restore_best", v); }},
        DPTNET_FIELD(double, "adam_beta1", adam.beta1),
        DPTNET_FIELD(double, "adam_beta2", adam.beta2),
        DPTNET_FIELD(double, "adam_eps", adam.eps)}},
      {"synthetic data",
       {DPTNET_FIELD(Index, "synth_train", synth_train),
        DPTNET_FIELD(Index, "synth_valid", synth_valid),
        DPTNET_FIELD(double, "synth_duration", synth_duration),
        DPTNET_FIELD(double, "snr_low_db", snr_low_db),
        DPTNET_FIELD(double, "snr_high_db", snr_high_db)}},
      {"directory data", {DPTNET_FIELD(double, "valid_fraction", valid_fraction)}},
  };
  return s;
}

#undef DPTNET_FIELD

}  // namespace

std::string to_string(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision parse_precision(const std::string& text) {
  if (text == "f32") return Precision::kF32;
  if (text == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + text + "' (expected f32 or f64)");
}

void RunConfig::validate() const {
  model.validate();
  train_config().schedule.validate();
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (segment_samples < 0) throw ConfigError("segment_samples must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (synth_train < 1) throw ConfigError("synth_train must be positive");
  if (synth_valid < 0) throw ConfigError("synth_valid must be non-negative");
  if (!(synth_duration > 0.0)) throw ConfigError("synth_duration must be positive");
  if (snr_high_db < snr_low_db) throw ConfigError("snr_high_db is below snr_low_db");
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) {
    throw ConfigError("valid_fraction must lie in [0, 1)");
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.patience = patience;
  t.batch_size = batch_size;
  t.clip_norm = clip_norm;
  t.schedule = schedule;
  t.schedule.d_model = model.n_filters;
  t.adam = adam;
  t.max_steps = max_steps;
  t.segment_samples = segment_samples;
  t.seed = seed;
  t.restore_best = restore_best;
  return t;
}

SynthConfig RunConfig::synth_config(Index count, std::uint64_t seed_offset) const {
  SynthConfig s;
  s.seed = seed + seed_offset;
  s.count = count;
  s.duration_s = synth_duration;
  s.sample_rate = model.sample_rate;
  s.snr_low_db = snr_low_db;
  s.snr_high_db = snr_high_db;
  return s;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, fields] : sections()) {
    if (!first) out << '\n';
    first = false;
    out << "# " << section << '\n';
    for (const auto& f : fields) out << f.key << " = " << f.get(*this) << '\n';
  }
  return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  std::map<std::string, const Field*> lookup;
  for (const auto& [section, fields] : sections()) {
    for (const auto& f : fields) lookup[f.key] = &f;
  }
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = lookup.find(key);
    if (it == lookup.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
    try {
      it->second->set(config, value);
    } catch (const std::invalid_argument& e) {
      const std::string quoted = "'" + key + "'";
      std::string what = e.what();
      if (what.rfind(quoted, 0) != 0) what = quoted + ": " + what;
      throw ConfigError("line " + std::to_string(line_no) + ": " + what);
    }
  }
  config.validate();
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config '" + path + "'");
  out << to_text();
  if (!out) throw DataError("failed writing config '" + path + "'");
}

}  // namespace dptnet
