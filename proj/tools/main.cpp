// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// dptnet: train, separate, evaluate, gradient-check and inspect separators.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dptnet/error.h"
#include "dptnet/grad_suite.h"
#include "dptnet/io/checkpoint.h"
#include "dptnet/io/dataset.h"
#include "dptnet/io/run_config.h"
#include "dptnet/io/wav.h"
#include "dptnet/numerics/tape.h"
#include "dptnet/training.h"
#include "json.hpp"

namespace {

using dptnet::Index;
using dptnet::RunConfig;
using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

// Seed offsets of the synthetic validation and evaluation splits.
constexpr std::uint64_t kValidSeedOffset = 1000003;
constexpr std::uint64_t kEvalSeedOffset = 2000003;

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  std::optional<int> threads;
  bool json = false;
};

void apply_overrides(RunConfig& cfg, const Common& c) {
  if (c.seed) cfg.seed = *c.seed;
  if (c.precision) cfg.precision = dptnet::parse_precision(*c.precision);
  if (c.threads) cfg.threads = *c.threads;
  cfg.validate();
}

template <typename T>
void load_training_data(const RunConfig& cfg, dptnet::Dataset<T>& train,
                        dptnet::Dataset<T>& valid) {
  if (cfg.data == "synthetic") {
    train = dptnet::synth_batch<T>(cfg.synth_config(cfg.synth_train, 0));
    valid = dptnet::synth_batch<T>(cfg.synth_config(cfg.synth_valid, kValidSeedOffset));
    return;
  }
  const auto all = dptnet::load_wav_dataset<T>(cfg.data, static_cast<int>(cfg.model.sources),
                                               cfg.model.sample_rate);
  dptnet::split_dataset(all, cfg.valid_fraction, train, valid);
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::optional<std::string> data;
  std::string out = "run";
};

template <typename T>
int run_train(RunConfig cfg, const TrainArgs& args, const Common& common) {
  if (args.data) cfg.data = *args.data;
  dptnet::Dataset<T> train, valid;
  load_training_data(cfg, train, valid);
  fs::create_directories(args.out);
  const fs::path out(args.out);
  cfg.save((out / "config.cfg").string());

  dptnet::SeparatorModel<T> model = dptnet::init_model<T>(cfg.model, cfg.seed);
  std::ofstream log(out / "train.log");
  log << "# epoch steps lr train_loss val_loss\n";
  auto on_epoch = [&](const dptnet::EpochRecord& e) {
    char line[256];
    std::snprintf(line, sizeof(line), "%d %lld %.6e %.6f %.6f", e.epoch,
                  static_cast<long long>(e.steps), e.lr, e.train_loss, e.val_loss);
    log << line << '\n';
    log.flush();
    if (!common.json) std::cout << "epoch " << line << std::endl;
  };
  const dptnet::TrainHistory history =
      dptnet::train_loop(model, train, valid, cfg.train_config(), on_epoch);
  dptnet::save_checkpoint((out / "model.ckpt").string(), model, cfg);

  json metrics;
  metrics["precision"] = dptnet::to_string(cfg.precision);
  metrics["parameters"] = dptnet::count_params(model);
  metrics["train_examples"] = train.size();
  metrics["valid_examples"] = valid.size();
  metrics["steps"] = history.step_lrs.size();
  metrics["early_stopped"] = history.early_stopped;
  metrics["best_epoch"] = history.best_epoch;
  json epochs = json::array();
  for (const auto& e : history.epochs) {
    json row{{"epoch", e.epoch}, {"steps", e.steps}, {"lr", e.lr}, {"train_loss", e.train_loss}};
    row["val_loss"] = std::isfinite(e.val_loss) ? json(e.val_loss) : json(nullptr);
    epochs.push_back(row);
  }
  metrics["epochs"] = epochs;
  if (!valid.empty()) {
    const dptnet::EvalResult r = dptnet::evaluate(model, valid, cfg.threads);
    metrics["valid_si_snr"] = r.mean_si_snr;
    metrics["valid_si_snri"] = r.mean_si_snri;
  }
  std::ofstream(out / "metrics.json") << metrics.dump(2) << '\n';
  if (common.json) {
    std::cout << metrics.dump(2) << std::endl;
  } else {
    std::cout << "wrote " << (out / "model.ckpt").string() << " after " << history.step_lrs.size()
              << " steps" << std::endl;
  }
  return kExitOk;
}

// ---- separate ----

struct SeparateArgs {
  std::string checkpoint;
  std::string input;
  std::string out = ".";
};

template <typename T>
int run_separate(const SeparateArgs& args, const Common& common) {
  RunConfig cfg;
  const auto model = dptnet::load_checkpoint<T>(args.checkpoint, &cfg);
  const dptnet::Waveform<T> mixture = dptnet::read_wav<T>(args.input);
  if (mixture.sample_rate != cfg.model.sample_rate) {
    throw dptnet::DataError("'" + args.input + "' is sampled at " +
                            std::to_string(mixture.sample_rate) + " Hz, the model expects " +
                            std::to_string(cfg.model.sample_rate));
  }
  std::vector<dptnet::Waveform<T>> estimates;
  {
    dptnet::NoGradScope<T> no_grad;
    estimates = dptnet::separate(mixture, model);
  }
  fs::create_directories(args.out);
  const std::string stem = fs::path(args.input).stem().string();
  json report = json::array();
  for (std::size_t s = 0; s < estimates.size(); ++s) {
    const fs::path path = fs::path(args.out) / (stem + "_s" + std::to_string(s + 1) + ".wav");
    const Index clipped = dptnet::write_wav(path.string(), estimates[s]);
    report.push_back({{"file", path.string()}, {"samples", estimates[s].samples.size()},
                      {"clipped", clipped}});
    if (clipped > 0) {
      std::cerr << "warning: " << clipped << " samples clipped in " << path.string() << '\n';
    }
    if (!common.json) std::cout << "wrote " << path.string() << std::endl;
  }
  // Masks need not partition the mixture; the residual is informational.
  double input_energy = 0.0, residual_energy = 0.0;
  for (Index i = 0; i < mixture.length(); ++i) {
    double sum = 0.0;
    for (const auto& e : estimates) sum += static_cast<double>(e.samples[i]);
    const double x = static_cast<double>(mixture.samples[i]);
    input_energy += x * x;
    residual_energy += (sum - x) * (sum - x);
  }
  const double residual_db =
      10.0 * std::log10((residual_energy + 1e-20) / (input_energy + 1e-20));
  if (common.json) {
    std::cout << json{{"outputs", report}, {"residual_db", residual_db}}.dump(2) << std::endl;
  } else {
    std::printf("residual (sum of outputs minus input): %.2f dB relative to input\n", residual_db);
  }
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string data = "synthetic";
  std::optional<Index> count;
};

template <typename T>
int run_eval(const EvalArgs& args, const Common& common) {
  RunConfig cfg;
  const auto model = dptnet::load_checkpoint<T>(args.checkpoint, &cfg);
  if (common.seed) cfg.seed = *common.seed;
  if (common.threads) cfg.threads = *common.threads;
  dptnet::Dataset<T> data;
  if (args.data == "synthetic") {
    data = dptnet::synth_batch<T>(
        cfg.synth_config(args.count.value_or(cfg.synth_valid > 0 ? cfg.synth_valid : 8), kEvalSeedOffset));
  } else if (args.data == "training") {
    // The synthetic mixtures the checkpoint was trained on.
    data = dptnet::synth_batch<T>(cfg.synth_config(args.count.value_or(cfg.synth_train), 0));
  } else {
    data = dptnet::load_wav_dataset<T>(args.data, static_cast<int>(cfg.model.sources),
                                       cfg.model.sample_rate);
    if (args.count && *args.count < static_cast<Index>(data.size())) data.resize(static_cast<std::size_t>(*args.count));
  }
  const dptnet::EvalResult r = dptnet::evaluate(model, data, cfg.threads);
  if (common.json) {
    std::cout << json{{"examples", data.size()},
                      {"mean_si_snr", r.mean_si_snr},
                      {"mean_si_snri", r.mean_si_snri},
                      {"si_snr", r.si_snr},
                      {"si_snri", r.si_snri}}
                     .dump(2)
              << std::endl;
    return kExitOk;
  }
  std::printf("%-8s %10s %10s\n", "example", "SI-SNR", "SI-SNRi");
  for (std::size_t i = 0; i < r.si_snr.size(); ++i) {
    std::printf("%-8zu %10.3f %10.3f\n", i, r.si_snr[i], r.si_snri[i]);
  }
  std::printf("%-8s %10.3f %10.3f\n", "mean", r.mean_si_snr, r.mean_si_snri);
  return kExitOk;
}

// ---- gradcheck ----

struct GradArgs {
  std::optional<std::string> config;
  int seeds = 10;
  bool inject_bug = false;
};

int run_gradcheck(const GradArgs& args, const Common& common) {
  if (common.precision && dptnet::parse_precision(*common.precision) != dptnet::Precision::kF64) {
    std::cerr << "gradcheck: finite differences need --precision f64\n";
    return kExitUsage;
  }
  dptnet::GradSuiteOptions options;
  options.seeds = args.seeds;
  options.inject_bug = args.inject_bug;
  if (common.seed) options.first_seed = *common.seed;
  if (args.config) options.model = RunConfig::load(*args.config).model;
  json cases = json::array();
  const dptnet::GradSuiteReport report =
      dptnet::run_gradient_suite(options, [&](const dptnet::GradCaseResult& r) {
        if (common.json) {
          cases.push_back({{"case", r.name}, {"seed", r.seed},
                           {"max_rel_error", r.report.max_rel_error},
                           {"checked", r.report.checked}, {"passed", r.passed}});
        } else if (!r.passed) {
          std::printf("FAIL %-26s seed %llu  rel err %.3e  (analytic %.6e, numeric %.6e)\n",
                      r.name.c_str(), static_cast<unsigned long long>(r.seed),
                      r.report.max_rel_error, r.report.analytic, r.report.numeric);
        }
      });
  if (common.json) {
    std::cout << json{{"passed", report.passed},
                      {"worst_error", report.worst_error},
                      {"worst_case", report.worst_case},
                      {"checked", report.checked},
                      {"cases", cases}}
                     .dump(2)
              << std::endl;
  } else {
    std::printf("%s: %zu checks over %d seeds, %lld coordinates, worst rel err %.3e (%s)\n",
                report.passed ? "PASS" : "FAIL", report.results.size(), options.seeds,
                static_cast<long long>(report.checked), report.worst_error,
                report.worst_case.c_str());
  }
  return report.passed ? kExitOk : kExitNumerical;
}

// ---- info ----

struct InfoArgs {
  std::optional<std::string> checkpoint;
  std::optional<std::string> config;
};

int run_info(const InfoArgs& args, const Common& common) {
  if (args.checkpoint.has_value() == args.config.has_value()) {
    std::cerr << "info: pass exactly one of --checkpoint or --config\n";
    return kExitUsage;
  }
  RunConfig cfg;
  std::string source;
  if (args.checkpoint) {
    const dptnet::CheckpointInfo info = dptnet::read_checkpoint_info(*args.checkpoint);
    cfg = info.config;
    source = *args.checkpoint + " (version " + std::to_string(info.version) + ", " +
             (info.scalar_bytes == 8 ? "f64" : "f32") + ")";
  } else {
    cfg = RunConfig::load(*args.config);
    source = *args.config;
  }
  const dptnet::SeparatorConfig& m = cfg.model;
  const dptnet::ParamBreakdown b = dptnet::param_breakdown(m);
  if (common.json) {
    std::cout << json{{"source", source},
                      {"n_filters", m.n_filters}, {"frame_len", m.frame_len},
                      {"frame_hop", m.resolved_frame_hop()}, {"blocks", m.blocks},
                      {"heads", m.heads}, {"d_ff", m.resolved_d_ff()},
                      {"ffn", dptnet::to_string(m.ffn)}, {"norm", dptnet::to_string(m.norm)},
                      {"sources", m.sources}, {"chunk_len", m.chunk_len},
                      {"params", {{"encoder", b.encoder}, {"per_transformer", b.per_transformer},
                                  {"blocks", b.blocks}, {"mask_head", b.mask_head},
                                  {"decoder", b.decoder}, {"total", b.total}}}}
                     .dump(2)
              << std::endl;
    return kExitOk;
  }
  std::printf("%s\n", source.c_str());
  std::printf("encoder     N=%lld L=%lld hop=%lld\n", static_cast<long long>(m.n_filters),
              static_cast<long long>(m.frame_len), static_cast<long long>(m.resolved_frame_hop()));
  std::printf("separator   B=%lld dual-path blocks, h=%lld heads, d_ff=%lld (%s, %s norm)\n",
              static_cast<long long>(m.blocks), static_cast<long long>(m.heads),
              static_cast<long long>(m.resolved_d_ff()), dptnet::to_string(m.ffn).c_str(),
              dptnet::to_string(m.norm).c_str());
  std::printf("chunking    K=%s\n",
              m.chunk_len > 0 ? std::to_string(m.chunk_len).c_str() : "auto");
  std::printf("sources     S=%lld\n\n", static_cast<long long>(m.sources));
  auto row = [](const char* name, Index n) {
    std::printf("%-18s %12lld\n", name, static_cast<long long>(n));
  };
  row("encoder", b.encoder);
  row("per transformer", b.per_transformer);
  row("dual-path blocks", b.blocks);
  row("mask head", b.mask_head);
  row("decoder", b.decoder);
  row("total", b.total);
  return kExitOk;
}

template <typename Fn>
int dispatch(dptnet::Precision p, Fn&& fn) {
  return p == dptnet::Precision::kF64 ? fn(double{}) : fn(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dptnet: dual-path transformer speech separation"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* cmd, bool with_precision) {
    cmd->add_option("--seed", common.seed, "Random seed override");
    if (with_precision) {
      cmd->add_option("--precision", common.precision, "Scalar type")
          ->check(CLI::IsMember({"f32", "f64"}));
    }
    cmd->add_option("--threads", common.threads, "Worker threads for evaluation")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--json", common.json, "Machine-readable output");
  };

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a separator");
  train_cmd->add_option("--config", train.config, "Run configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--data", train.data, "'synthetic' or a directory with mix/ s1/ s2/");
  train_cmd->add_option("--out", train.out, "Output directory")->capture_default_str();
  add_common(train_cmd, true);

  SeparateArgs sep;
  CLI::App* sep_cmd = app.add_subcommand("separate", "Separate a mono WAV mixture");
  sep_cmd->add_option("--checkpoint", sep.checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  sep_cmd->add_option("--input", sep.input, "Mixture WAV")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--out", sep.out, "Output directory")->capture_default_str();
  add_common(sep_cmd, true);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Report SI-SNR and SI-SNRi");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "'synthetic' (held-out draws), 'training' (the synthetic training set) or a WAV directory")->capture_default_str();
  eval_cmd->add_option("--count", ev.count, "Number of examples")->check(CLI::PositiveNumber);
  add_common(eval_cmd, true);

  GradArgs grad;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad_cmd->add_option("--config", grad.config, "Model section used by the end-to-end case")
      ->check(CLI::ExistingFile);
  grad_cmd->add_option("--seeds", grad.seeds, "Seeds per case")->capture_default_str()->check(CLI::PositiveNumber);
  grad_cmd->add_flag("--inject-bug", grad.inject_bug,
                     "Add a case with a deliberately wrong gradient (must fail)");
  add_common(grad_cmd, true);

  InfoArgs info;
  CLI::App* info_cmd = app.add_subcommand("info", "Parameter count and architecture");
  info_cmd->add_option("--checkpoint", info.checkpoint, "Model checkpoint")
      ->check(CLI::ExistingFile);
  info_cmd->add_option("--config", info.config, "Run configuration file")
      ->check(CLI::ExistingFile);
  add_common(info_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      RunConfig cfg = RunConfig::load(train.config);
      apply_overrides(cfg, common);
      return dispatch(cfg.precision, [&](auto tag) {
        return run_train<decltype(tag)>(cfg, train, common);
      });
    }
    const dptnet::Precision precision =
        common.precision ? dptnet::parse_precision(*common.precision) : dptnet::Precision::kF32;
    if (sep_cmd->parsed()) {
      return dispatch(precision, [&](auto tag) { return run_separate<decltype(tag)>(sep, common); });
    }
    if (eval_cmd->parsed()) {
      return dispatch(precision, [&](auto tag) { return run_eval<decltype(tag)>(ev, common); });
    }
    if (grad_cmd->parsed()) return run_gradcheck(grad, common);
    if (info_cmd->parsed()) return run_info(info, common);
  } catch (const dptnet::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const dptnet::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
