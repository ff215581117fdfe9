#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamattack/attacks.hpp"
#include "streamattack/buffer.hpp"
#include "streamattack/conformal.hpp"
#include "streamattack/detector.hpp"
#include "streamattack/forecaster.hpp"
#include "streamattack/ingest.hpp"

namespace streamattack {

enum class DataSource { Household, Synthetic };

enum class RunMode {
  Selective,
  BaselineEveryStep,
  BaselineRateMatched,
  Clean,
};

const char* to_string(RunMode mode);
RunMode parse_run_mode(const std::string& name);

struct ExperimentConfig {
  DataSource source = DataSource::Synthetic;
  std::filesystem::path data_path;
  std::size_t synth_features = 7;

  std::size_t buffer_capacity = 43200;
  std::size_t window = 60;
  std::size_t stream_steps = 50000;

  double miscoverage = 0.1;
  double attack_rate = 0.1;
  std::size_t history = 1440;
  std::size_t warmup = 1440;

  AttackConfig attack;
  std::vector<AttackKind> kinds = {AttackKind::Fgsm, AttackKind::Bim, AttackKind::NiFgsm};
  std::vector<double> epsilons = {0.05, 0.10, 0.15};
  RunMode mode = RunMode::Selective;
  /// Rate for BaselineRateMatched runs; <= 0 means "match a selective run".
  double baseline_rate = 0.0;
  bool persistent_poisoning = false;

  std::vector<std::uint64_t> seeds = {1};

  TrainConfig train;
  LidConfig lid;
  bool detector = true;
  std::size_t detector_windows = 1000;

  std::filesystem::path output_dir = "out";
  /// Optional pre-trained model stem (see save_model) and calibrator file.
  std::filesystem::path model_path;
  std::filesystem::path calibrator_path;

  AttackKind plot_kind = AttackKind::Bim;
  double plot_epsilon = 0.05;

  /// Applies one key=value setting; throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  void load_file(const std::filesystem::path& path);
  /// Range checks and path existence.
  void validate() const;
  /// Canonical key=value text covering every field.
  std::string echo() const;
};

/// Everything that is shared by all modes of one seed: data, the initial
/// buffer, the trained model and its calibrator.
struct PreparedRun {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::shared_ptr<const TimeSeriesFrame> frame;
  std::size_t stream_steps = 0;
  ForecasterModel model;
  ConformalCalibrator calibrator;
  std::vector<WindowSample> calibration_windows;
  std::uint64_t stream_hash = 0;
};

std::shared_ptr<const TimeSeriesFrame> load_frame(const ExperimentConfig& config, std::uint64_t seed);

/// Fills the buffer, trains on the 75% segment and calibrates on the rest.
/// Throws DataSizeError unless at least 1,000 steps remain to stream.
PreparedRun prepare_run(const ExperimentConfig& config, std::uint64_t seed,
                        std::shared_ptr<const TimeSeriesFrame> frame = nullptr);

/// Detector trained on every-step baseline perturbations of calibration
/// windows, with a clean reference batch drawn from the same segment.
struct DetectorBundle {
  LidFeaturizer featurizer;
  DetectorFit fit;
};
std::unique_ptr<DetectorBundle> fit_stream_detector(const PreparedRun& run, const AttackConfig& attack);

struct StepRecord {
  std::size_t t = 0;
  double y_true = 0.0;
  double y_hat_clean = 0.0;
  std::optional<double> y_hat_adv;
  double lo = 0.0;
  double hi = 0.0;
  double width = 0.0;
  double threshold = 0.0;
  bool attacked = false;
  bool warmup = false;
  std::optional<double> detector_score;
  bool detector_flag = false;
};

/// Bound check of one emitted perturbation.
struct PerturbationCheck {
  std::size_t t = 0;
  double linf = 0.0;
  bool within_epsilon = false;
  bool in_unit_box = false;
  bool clean_in_unit_box = false;
};

struct MetricsReport {
  RunMode mode = RunMode::Clean;
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double rmse_clean = 0.0;
  std::optional<double> rmse_adv;
  /// Clean-forecast RMSE over the same attacked steps.
  std::optional<double> rmse_baseline_comparable;
  std::size_t attack_count = 0;
  std::size_t total_steps = 0;
  std::size_t warmup = 0;
  double realized_rate = 0.0;
  std::optional<BinaryMetrics> detection;
  std::size_t epsilon_violations = 0;
  std::size_t box_violations = 0;
  std::size_t attack_errors = 0;
  std::uint64_t model_hash = 0;
  std::uint64_t calibrator_hash = 0;
  std::uint64_t stream_hash = 0;
};

struct RunResult {
  std::vector<StepRecord> records;
  std::vector<PerturbationCheck> perturbations;
  std::vector<PerturbationRecord> kept;  // only when requested
  MetricsReport metrics;
};

struct RunOptions {
  RunMode mode = RunMode::Selective;
  AttackConfig attack;
  /// For BaselineRateMatched: the number of post-warm-up steps to attack.
  std::optional<std::size_t> matched_attack_count;
  const DetectorBundle* detector = nullptr;
  bool keep_perturbations = false;
};

RunResult run_stream(const PreparedRun& run, const RunOptions& options);

/// Single-seed convenience: prepare with config.seeds.front(), then run
/// config.mode with config.attack.
RunResult run_stream(const ExperimentConfig& config);

/// RMSE over attacked records only; nullopt when nothing was attacked.
std::optional<double> rmse_adv(const std::vector<StepRecord>& records);

std::uint64_t calibrator_hash(const ConformalCalibrator& c);

struct CellSeedResult {
  std::uint64_t seed = 0;
  MetricsReport selective;
  MetricsReport rate_matched;
  MetricsReport every_step;
  std::optional<BinaryMetrics> detector_heldout;
};

struct ComparisonCell {
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 0.0;
  std::vector<CellSeedResult> seeds;
};

struct ComparisonReport {
  ExperimentConfig config;
  std::vector<ComparisonCell> cells;
  std::vector<std::string> plot_files;
  std::map<std::uint64_t, MetricsReport> clean_runs;  // by seed
};

/// Selective vs rate-matched vs every-step baseline for every (kind, eps)
/// in the config, on every seed. Writes plot files for the plot cell of
/// the first seed when `plot_dir` is non-empty.
ComparisonReport compare_modes(const ExperimentConfig& config,
                               const std::filesystem::path& plot_dir = {});

double mean_of(const std::vector<double>& v);
std::optional<double> cell_mean(const ComparisonCell& cell, RunMode mode);
std::optional<double> cell_mean_f1(const ComparisonCell& cell, RunMode mode);

std::string format_run_report(const ExperimentConfig& config, const std::vector<MetricsReport>& runs);
std::string format_comparison_report(const ComparisonReport& report);

/// Writes `<prefix>_widths.tsv` and `<prefix>_forecast.tsv`; returns the paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<StepRecord>& records,
                                              const std::filesystem::path& out_dir,
                                              const std::string& prefix);

void write_records(const std::vector<StepRecord>& records, const std::filesystem::path& path);

}  // namespace streamattack
