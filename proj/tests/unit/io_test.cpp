// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "dptnet/error.h"
#include "dptnet/io/checkpoint.h"
#include "dptnet/io/dataset.h"
#include "dptnet/io/run_config.h"
#include "dptnet/io/wav.h"

namespace dptnet {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("dptnet_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

RunConfig unusual_config() {
  RunConfig c;
  c.model.n_filters = 12;
  c.model.frame_len = 4;
  c.model.frame_hop = 3;
  c.model.blocks = 2;
  c.model.heads = 3;
  c.model.d_ff = 20;
  c.model.sources = 3;
  c.model.chunk_len = 10;
  c.model.chunk_hop = 4;
  c.model.ffn = FfnKind::kBiTanh;
  c.model.norm = NormScope::kGlobal;
  c.model.sample_rate = 16000;
  c.precision = Precision::kF64;
  c.seed = 18446744073709551615ULL;
  c.threads = 3;
  c.data = "/some/dir with spaces";
  c.schedule.k1 = 0.1 + 0.2;
  c.schedule.k2 = 1.0 / 3.0;
  c.schedule.warmup_n = 17;
  c.schedule.decay = 0.9;
  c.schedule.decay_every = 3;
  c.adam.beta1 = 0.8;
  c.adam.beta2 = 0.99;
  c.adam.eps = 1e-7;
  c.epochs = 5;
  c.patience = 2;
  c.batch_size = 4;
  c.clip_norm = 2.5;
  c.max_steps = 99;
  c.segment_samples = 123;
  c.restore_best = false;
  c.synth_train = 7;
  c.synth_valid = 0;
  c.synth_duration = 0.123456789;
  c.snr_low_db = -2.5;
  c.snr_high_db = 7.25;
  c.valid_fraction = 0.3;
  return c;
}

TEST(RunConfig, DefaultsFollowTheFullRecipe) {
  const RunConfig c;
  EXPECT_EQ(c.model.n_filters, 64);
  EXPECT_EQ(c.model.frame_len, 2);
  EXPECT_EQ(c.model.resolved_frame_hop(), 1);
  EXPECT_EQ(c.model.blocks, 6);
  EXPECT_EQ(c.model.heads, 4);
  EXPECT_EQ(c.model.resolved_d_ff(), 256);
  EXPECT_EQ(c.schedule.warmup_n, 4000);
  EXPECT_EQ(c.schedule.k1, 0.2);
  EXPECT_EQ(c.schedule.k2, 4e-4);
  EXPECT_EQ(c.clip_norm, 5.0);
  EXPECT_EQ(c.epochs, 100);
  EXPECT_EQ(c.patience, 10);
  EXPECT_EQ(c.train_config().schedule.d_model, 64);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, TextRoundTripIsExact) {
  const RunConfig c = unusual_config();
  const std::string text = c.to_text();
  const RunConfig back = RunConfig::parse(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.schedule.k1, c.schedule.k1);
  EXPECT_EQ(back.schedule.k2, c.schedule.k2);
  EXPECT_EQ(back.synth_duration, c.synth_duration);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.data, c.data);
  EXPECT_EQ(back.model.ffn, FfnKind::kBiTanh);
  EXPECT_EQ(back.model.norm, NormScope::kGlobal);
  EXPECT_FALSE(back.restore_best);
  EXPECT_EQ(RunConfig::parse(RunConfig{}.to_text()).to_text(), RunConfig{}.to_text());
}

TEST(RunConfig, FileRoundTrip) {
  TempDir dir;
  const RunConfig c = unusual_config();
  c.save(dir.file("run.cfg"));
  EXPECT_EQ(RunConfig::load(dir.file("run.cfg")).to_text(), c.to_text());
  EXPECT_THROW(RunConfig::load(dir.file("missing.cfg")), DataError);
}

TEST(RunConfig, PartialFilesKeepDefaults) {
  const RunConfig c = RunConfig::parse("# comment\n\n  blocks = 2   # trailing\nk1=0.5\n");
  EXPECT_EQ(c.model.blocks, 2);
  EXPECT_EQ(c.schedule.k1, 0.5);
  EXPECT_EQ(c.model.n_filters, 64);
}

void expect_config_error(const std::string& text, const std::string& fragment) {
  try {
    RunConfig::parse(text);
    ADD_FAILURE() << "accepted: " << text;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(RunConfig, RejectsBadInput) {
  expect_config_error("blocks = 2\nwibble = 3\n", "line 2");
  expect_config_error("wibble = 3\n", "wibble");
  expect_config_error("blocks = 2\nblocks = 3\n", "blocks");
  expect_config_error("blocks = two\n", "blocks");
  expect_config_error("blocks = 2.5\n", "blocks");
  expect_config_error("k1 = \n", "k1");
  expect_config_error("just some words\n", "line 1");
  expect_config_error("precision = f16\n", "precision");
  expect_config_error("ffn = gru\n", "ffn");
  expect_config_error("restore_best = maybe\n", "restore_best");
  expect_config_error("heads = 3\n", "heads");
  expect_config_error("epochs = 0\n", "epochs");
  expect_config_error("snr_low_db = 6\n", "snr_high_db");
}

template <typename T>
void expect_same_parameters(const SeparatorModel<T>& a, const SeparatorModel<T>& b) {
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].tensor.shape(), pb[i].tensor.shape());
    EXPECT_EQ(pa[i].tensor.to_vector(), pb[i].tensor.to_vector()) << pa[i].name;
  }
}

RunConfig small_run(Precision precision) {
  RunConfig c;
  c.model.n_filters = 8;
  c.model.blocks = 1;
  c.model.heads = 2;
  c.precision = precision;
  return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  const RunConfig c = small_run(Precision::kF32);
  const SeparatorModel<float> model = init_model<float>(c.model, 3);
  save_checkpoint(dir.file("a.ckpt"), model, c);
  RunConfig loaded_cfg;
  const SeparatorModel<float> back = load_checkpoint<float>(dir.file("a.ckpt"), &loaded_cfg);
  expect_same_parameters(model, back);
  EXPECT_EQ(loaded_cfg.to_text(), c.to_text());
  const CheckpointInfo info = read_checkpoint_info(dir.file("a.ckpt"));
  EXPECT_EQ(info.version, kCheckpointVersion);
  EXPECT_EQ(info.scalar_bytes, 4u);
  save_checkpoint(dir.file("b.ckpt"), back, loaded_cfg);
  EXPECT_EQ(read_bytes(dir.file("a.ckpt")), read_bytes(dir.file("b.ckpt")));
}

TEST(Checkpoint, DoubleRoundTripAndPrecisionConversion) {
  TempDir dir;
  const RunConfig c = small_run(Precision::kF64);
  const SeparatorModel<double> model = init_model<double>(c.model, 4);
  save_checkpoint(dir.file("d.ckpt"), model, c);
  expect_same_parameters(model, load_checkpoint<double>(dir.file("d.ckpt")));
  const SeparatorModel<float> narrow = load_checkpoint<float>(dir.file("d.ckpt"));
  const auto wide = model.named_parameters();
  const auto small = narrow.named_parameters();
  for (std::size_t i = 0; i < wide.size(); ++i) {
    for (Index k = 0; k < wide[i].tensor.size(); ++k) {
      EXPECT_EQ(small[i].tensor[k], static_cast<float>(wide[i].tensor[k]));
    }
  }
}

TEST(Checkpoint, RefusesOtherVersions) {
  TempDir dir;
  const RunConfig c = small_run(Precision::kF32);
  save_checkpoint(dir.file("a.ckpt"), init_model<float>(c.model, 1), c);
  std::string bytes = read_bytes(dir.file("a.ckpt"));
  bytes[8] = static_cast<char>(kCheckpointVersion + 1);  // version follows the 8-byte magic
  write_bytes(dir.file("v.ckpt"), bytes);
  try {
    load_checkpoint<float>(dir.file("v.ckpt"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RefusesDamagedFiles) {
  TempDir dir;
  const RunConfig c = small_run(Precision::kF32);
  save_checkpoint(dir.file("a.ckpt"), init_model<float>(c.model, 1), c);
  const std::string bytes = read_bytes(dir.file("a.ckpt"));
  write_bytes(dir.file("short.ckpt"), bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint<float>(dir.file("short.ckpt")), DataError);
  write_bytes(dir.file("long.ckpt"), bytes + "x");
  EXPECT_THROW(load_checkpoint<float>(dir.file("long.ckpt")), DataError);
  std::string magic = bytes;
  magic[0] = 'X';
  write_bytes(dir.file("magic.ckpt"), magic);
  EXPECT_THROW(load_checkpoint<float>(dir.file("magic.ckpt")), DataError);
  EXPECT_THROW(load_checkpoint<float>(dir.file("absent.ckpt")), DataError);
}

TEST(Wav, RoundTripWithinQuantisation) {
  TempDir dir;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(777);
  for (double& x : v) x = u(rng);
  const Waveform<double> w{Tensor<double>({777}, v), 16000};
  EXPECT_EQ(write_wav(dir.file("a.wav"), w), 0);
  const Waveform<double> back = read_wav<double>(dir.file("a.wav"));
  EXPECT_EQ(back.sample_rate, 16000);
  ASSERT_EQ(back.length(), 777);
  for (Index i = 0; i < 777; ++i) EXPECT_NEAR(back.samples[i], v[static_cast<std::size_t>(i)], 0.5 / 32767 + 1e-12);
  // Re-writing quantised samples reproduces the file byte for byte.
  write_wav(dir.file("b.wav"), back);
  EXPECT_EQ(read_bytes(dir.file("a.wav")), read_bytes(dir.file("b.wav")));
  EXPECT_EQ(read_bytes(dir.file("a.wav")).size(), 44u + 2u * 777u);
}

TEST(Wav, ClipsAndCounts) {
  TempDir dir;
  const Waveform<float> w{Tensor<float>::vector({0.5f, 1.5f, -2.0f, 1.0f}), 8000};
  EXPECT_EQ(write_wav(dir.file("c.wav"), w), 2);
  const Waveform<float> back = read_wav<float>(dir.file("c.wav"));
  EXPECT_EQ(back.samples[1], 1.0f);
  EXPECT_EQ(back.samples[2], -1.0f);
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

std::string pcm_header(std::uint16_t channels, std::uint16_t bits, std::uint32_t data_bytes) {
  std::string s = "RIFF";
  put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, channels);
  put_u32(s, 8000);
  put_u32(s, 8000u * channels * bits / 8);
  put_u16(s, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(s, bits);
  s += "data";
  put_u32(s, data_bytes);
  return s;
}

TEST(Wav, RejectsUnsupportedFiles) {
  TempDir dir;
  write_bytes(dir.file("stereo.wav"), pcm_header(2, 16, 8) + std::string(8, '\0'));
  try {
    read_wav<float>(dir.file("stereo.wav"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("mono"), std::string::npos) << e.what();
  }
  write_bytes(dir.file("8bit.wav"), pcm_header(1, 8, 4) + std::string(4, '\0'));
  EXPECT_THROW(read_wav<float>(dir.file("8bit.wav")), DataError);
  write_bytes(dir.file("junk.wav"), "not a wave file at all");
  EXPECT_THROW(read_wav<float>(dir.file("junk.wav")), DataError);
  EXPECT_THROW(read_wav<float>(dir.file("absent.wav")), DataError);
}

TEST(WavDataset, SaveLoadAndSplit) {
  TempDir dir;
  SynthConfig s;
  s.seed = 5;
  s.count = 5;
  s.duration_s = 0.05;
  const Dataset<double> data = synth_batch<double>(s);
  save_wav_dataset(dir.path().string(), data);
  EXPECT_TRUE(fs::exists(dir.path() / "mix" / "00000.wav"));
  EXPECT_TRUE(fs::exists(dir.path() / "s2" / "00004.wav"));
  const Dataset<double> back = load_wav_dataset<double>(dir.path().string(), 2, 8000);
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    ASSERT_EQ(back[i].mixture.size(), data[i].mixture.size());
    for (Index k = 0; k < back[i].mixture.size(); ++k) {
      EXPECT_NEAR(back[i].mixture[k], data[i].mixture[k], 1.0 / 32767);
    }
  }
  EXPECT_THROW(load_wav_dataset<double>(dir.path().string(), 2, 16000), DataError);
  EXPECT_THROW(load_wav_dataset<double>(dir.path().string(), 3, 8000), DataError);
  EXPECT_THROW(load_wav_dataset<double>(dir.file("nowhere"), 2, 8000), DataError);

  Dataset<double> train, valid;
  split_dataset(back, 0.4, train, valid);
  EXPECT_EQ(train.size(), 3u);
  EXPECT_EQ(valid.size(), 2u);
  EXPECT_EQ(valid[0].mixture.to_vector(), back[3].mixture.to_vector());
  split_dataset(back, 1.0, train, valid);
  EXPECT_EQ(train.size(), 1u);
}

}  // namespace
}  // namespace dptnet
