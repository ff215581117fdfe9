#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace streamattack {

struct CleaningStats {
  std::size_t raw_rows = 0;
  std::size_t dropped_rows = 0;
  bool operator==(const CleaningStats&) const = default;
};

/// Minute-resolution multivariate series. `features` is row-major
/// [rows x feature_names.size()]. Freshly parsed frames may hold NaN for
/// missing cells; `clean_frame` removes those rows.
struct TimeSeriesFrame {
  std::vector<std::int64_t> timestamps;  // minutes since 1970-01-01
  std::vector<double> features;
  std::vector<std::string> feature_names;
  std::size_t target_index = 0;
  CleaningStats stats;

  std::size_t rows() const { return timestamps.size(); }
  std::size_t dims() const { return feature_names.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dims(), dims());
  }
  double target(std::size_t i) const { return features[i * dims() + target_index]; }

  /// Checks the cleaned-frame invariants; throws on violation.
  void validate() const;

  bool operator==(const TimeSeriesFrame&) const = default;
};

/// Timestamp sentinel for rows whose date or time could not be parsed.
inline constexpr std::int64_t kInvalidTimestamp = INT64_MIN;

/// Parses the semicolon-delimited UCI household file. Missing markers
/// ("?" or blank) and unparseable numbers become NaN; nothing is dropped.
TimeSeriesFrame parse_household_csv(const std::filesystem::path& path);

/// Drops every row holding a NaN or an invalid timestamp. Idempotent.
TimeSeriesFrame clean_frame(const TimeSeriesFrame& raw);

/// parse + clean. Target is Global_active_power.
TimeSeriesFrame load_household_csv(const std::filesystem::path& path);

/// Writes a frame back out in the UCI household layout; NaN cells are
/// written as "?". The frame must have exactly the seven household columns.
void write_household_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);

/// Comma-separated debug dump: header "timestamp,<feature names...>".
void write_frame_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);

struct SynthOptions {
  double daily_amplitude = 0.6;
  double ar_coefficient = 0.8;
  double noise_scale = 0.08;
  /// Expected spikes per day and their mean height.
  double spikes_per_day = 6.0;
  double spike_amplitude = 1.2;
  double spike_decay_minutes = 15.0;
};

/// Seeded synthetic stream: target = daily sinusoid + AR(1) noise +
/// Poisson-timed decaying demand spikes; the other d-1 columns are lagged,
/// noisy transforms of the target. Column 0 is the target.
TimeSeriesFrame synth_stream(std::uint64_t seed, std::size_t n, std::size_t d,
                             const SynthOptions& options = {});

/// The deterministic daily component synth_stream adds to the target.
double synth_daily_component(std::size_t minute, const SynthOptions& options);

/// Seeded stand-in with the seven household columns and household-like
/// behaviour (diurnal load, appliance bursts on three sub-meters, voltage
/// sag under load). About `missing_fraction` of rows are NaN so that the
/// written file carries "?" markers.
TimeSeriesFrame synth_household(std::uint64_t seed, std::size_t n, double missing_fraction = 0.01);

const std::vector<std::string>& household_feature_names();

}  // namespace streamattack
