// streamattack command line: train / calibrate / run / compare / detect.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "streamattack/conformal.hpp"
#include "streamattack/detector.hpp"
#include "streamattack/error.hpp"
#include "streamattack/forecaster.hpp"
#include "streamattack/harness.hpp"
#include "streamattack/hash.hpp"
#include "streamattack/ingest.hpp"

namespace fs = std::filesystem;
using namespace streamattack;

namespace {

// Every ExperimentConfig key is exposed as --<key> (underscores become dashes).
const char* const kConfigKeys[] = {
    "source", "data", "synth_features", "buffer", "window", "stream", "miscoverage",
    "attack_rate", "history", "warmup", "attack", "epsilon", "iterations", "step",
    "momentum", "scope", "kinds", "epsilons", "mode", "baseline_rate",
    "persistent_poisoning", "seeds", "epochs", "learning_rate", "batch", "dropout",
    "optimizer", "shared_trunk", "filters", "kernel_width", "pool", "hidden", "lid_k",
    "lid_batch", "lid_layers", "detector", "detector_windows", "out", "model",
    "calibrator", "plot_kind", "plot_epsilon",
};

struct Options {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* cmd, Options& opts) {
  cmd->add_option("--config", opts.config_file, "key=value configuration file");
  for (const char* key : kConfigKeys) {
    std::string flag = "--" + std::string(key);
    for (auto& c : flag) {
      if (c == '_') c = '-';
    }
    cmd->add_option_function<std::string>(
        flag, [&opts, key](const std::string& v) { opts.values[key] = v; }, key);
  }
}

ExperimentConfig build_config(const Options& opts) {
  ExperimentConfig cfg;
  if (!opts.config_file.empty()) cfg.load_file(opts.config_file);
  for (const auto& [k, v] : opts.values) cfg.set(k, v);
  if (cfg.output_dir.empty()) cfg.output_dir = "streamattack_out";
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

int cmd_train(const Options& opts) {
  ExperimentConfig cfg = build_config(opts);
  cfg.model_path.clear();
  cfg.calibrator_path.clear();
  const PreparedRun run = prepare_run(cfg, cfg.seeds.front());
  const fs::path stem = opts.values.count("model") ? fs::path(opts.values.at("model")) : cfg.output_dir / "model";
  fs::create_directories(stem.parent_path().empty() ? fs::path(".") : stem.parent_path());
  save_model(run.model, stem);
  std::printf("model=%s parameters=%s\n", stem.string().c_str(), hex64(run.model.parameter_hash()).c_str());
  return 0;
}

int cmd_calibrate(const Options& opts) {
  ExperimentConfig cfg = build_config(opts);
  if (cfg.model_path.empty()) throw UsageError("calibrate needs --model <stem> from a previous train");
  cfg.calibrator_path.clear();
  const PreparedRun run = prepare_run(cfg, cfg.seeds.front());
  const fs::path path = cfg.output_dir / "calibrator.txt";
  fs::create_directories(cfg.output_dir);
  save_calibrator(run.calibrator, path);
  std::printf("calibrator=%s correction=%.9g scores=%zu\n", path.string().c_str(), run.calibrator.correction(),
              run.calibrator.scores().size());
  return 0;
}

int cmd_run(const Options& opts) {
  const ExperimentConfig cfg = build_config(opts);
  std::vector<MetricsReport> metrics;
  fs::create_directories(cfg.output_dir);
  for (std::uint64_t seed : cfg.seeds) {
    ExperimentConfig one = cfg;
    one.seeds = {seed};
    const RunResult result = run_stream(one);
    write_records(result.records, cfg.output_dir / ("records_seed" + std::to_string(seed) + ".tsv"));
    metrics.push_back(result.metrics);
  }
  const std::string report = format_run_report(cfg, metrics);
  write_text(cfg.output_dir / "run_report.txt", report);
  std::cout << report;
  return 0;
}

int cmd_compare(const Options& opts) {
  const ExperimentConfig cfg = build_config(opts);
  const ComparisonReport report = compare_modes(cfg, cfg.output_dir / "plots");
  const std::string text = format_comparison_report(report);
  write_text(cfg.output_dir / "compare_report.txt", text);
  std::cout << text;
  return 0;
}

int cmd_detect(const Options& opts) {
  ExperimentConfig cfg = build_config(opts);
  const PreparedRun run = prepare_run(cfg, cfg.seeds.front());
  const auto bundle = fit_stream_detector(run, cfg.attack);
  fs::create_directories(cfg.output_dir);
  const fs::path path = cfg.output_dir / "detector.txt";
  save_detector(bundle->fit.model, path);
  const BinaryMetrics& h = bundle->fit.heldout;
  std::printf("detector=%s heldout_precision=%.6f heldout_recall=%.6f heldout_f1=%.6f\n", path.string().c_str(),
              h.precision, h.recall, h.f1);
  return 0;
}

int cmd_gen_household(std::uint64_t seed, std::size_t rows, double missing, const fs::path& out) {
  write_household_csv(synth_household(seed, rows, missing), out);
  std::printf("wrote %zu rows to %s\n", rows, out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective adversarial attacks on streaming forecasters"};
  app.require_subcommand(1);

  Options train_o, calib_o, run_o, compare_o, detect_o;
  add_config_flags(app.add_subcommand("train", "fill the buffer and train the forecaster"), train_o);
  add_config_flags(app.add_subcommand("calibrate", "conformal calibration of a saved model"), calib_o);
  add_config_flags(app.add_subcommand("run", "replay the stream in one mode"), run_o);
  add_config_flags(app.add_subcommand("compare", "selective vs baselines over the kind x epsilon grid"), compare_o);
  add_config_flags(app.add_subcommand("detect", "fit the LID detector and report held-out scores"), detect_o);

  std::uint64_t gen_seed = 1;
  std::size_t gen_rows = 100000;
  double gen_missing = 0.01;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-household", "write a seeded stand-in in the UCI household format");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--rows", gen_rows);
  gen->add_option("--missing", gen_missing);
  gen->add_option("--out", gen_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error[usage]: %s\n", e.what());
    return 2;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "train") return cmd_train(train_o);
    if (name == "calibrate") return cmd_calibrate(calib_o);
    if (name == "run") return cmd_run(run_o);
    if (name == "compare") return cmd_compare(compare_o);
    if (name == "detect") return cmd_detect(detect_o);
    return cmd_gen_household(gen_seed, gen_rows, gen_missing, gen_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", to_string(e.kind()), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
}
