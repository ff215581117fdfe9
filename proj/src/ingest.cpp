#include "streamattack/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string_view>

#include "streamattack/error.hpp"

namespace streamattack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTwoPi = 6.283185307179586;
constexpr std::size_t kMinutesPerDay = 1440;

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view field) {
  field = trim(field);
  if (field.empty() || field == "?") return kNaN;
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) return kNaN;
  return v;
}

bool parse_int(std::string_view s, int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// "dd/mm/yyyy" + "hh:mm:ss" -> minutes since epoch.
std::int64_t parse_timestamp(std::string_view date, std::string_view time) {
  const auto dp = split(trim(date), '/');
  const auto tp = split(trim(time), ':');
  if (dp.size() != 3 || tp.size() < 2) return kInvalidTimestamp;
  int day = 0, month = 0, year = 0, hour = 0, minute = 0;
  if (!parse_int(dp[0], day) || !parse_int(dp[1], month) || !parse_int(dp[2], year) ||
      !parse_int(tp[0], hour) || !parse_int(tp[1], minute)) {
    return kInvalidTimestamp;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{year},
                                        std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour < 0 || hour > 23 || minute < 0 || minute > 59) return kInvalidTimestamp;
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 1440 + hour * 60 + minute;
}

void format_timestamp(std::int64_t minutes, std::string& date, std::string& time) {
  const auto days = std::chrono::sys_days{std::chrono::days{minutes / 1440}};
  const std::chrono::year_month_day ymd{days};
  const auto in_day = minutes % 1440;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%u/%u/%d", static_cast<unsigned>(ymd.day()),
                static_cast<unsigned>(ymd.month()), static_cast<int>(ymd.year()));
  date = buf;
  std::snprintf(buf, sizeof buf, "%02d:%02d:00", static_cast<int>(in_day / 60),
                static_cast<int>(in_day % 60));
  time = buf;
}

// 16 Dec 2006 17:24, the first instant of the public household file.
constexpr std::int64_t kSynthEpochMinutes = 13498 * 1440 + 17 * 60 + 24;

}  // namespace

const std::vector<std::string>& household_feature_names() {
  static const std::vector<std::string> names = {
      "Global_active_power", "Global_reactive_power", "Voltage", "Global_intensity",
      "Sub_metering_1",      "Sub_metering_2",        "Sub_metering_3"};
  return names;
}

void TimeSeriesFrame::validate() const {
  if (rows() == 0) throw EmptyDataError("frame has no rows");
  if (dims() == 0 || features.size() != rows() * dims()) {
    throw FormatError("frame feature matrix does not match its shape");
  }
  if (target_index >= dims()) throw FormatError("target index out of range");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) throw FormatError("frame contains non-finite values");
  }
  for (std::size_t i = 1; i < rows(); ++i) {
    if (timestamps[i] <= timestamps[i - 1]) {
      throw FormatError("timestamps not strictly increasing at row " + std::to_string(i));
    }
  }
}

TimeSeriesFrame parse_household_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header in " + path.string());
  const auto header = split(trim(line), ';');
  if (header.size() < 3 || trim(header[0]) != "Date" || trim(header[1]) != "Time" ||
      trim(header[2]) != "Global_active_power") {
    throw FormatError("malformed header in " + path.string() +
                      ": expected \"Date;Time;Global_active_power;...\"");
  }

  TimeSeriesFrame frame;
  for (std::size_t c = 2; c < header.size(); ++c) frame.feature_names.emplace_back(trim(header[c]));
  frame.target_index = 0;
  const std::size_t d = frame.feature_names.size();

  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    ++frame.stats.raw_rows;
    const auto fields = split(body, ';');
    if (fields.size() != header.size()) {
      frame.timestamps.push_back(kInvalidTimestamp);
      frame.features.insert(frame.features.end(), d, kNaN);
      continue;
    }
    frame.timestamps.push_back(parse_timestamp(fields[0], fields[1]));
    for (std::size_t c = 0; c < d; ++c) frame.features.push_back(parse_number(fields[c + 2]));
  }
  return frame;
}

TimeSeriesFrame clean_frame(const TimeSeriesFrame& raw) {
  TimeSeriesFrame out;
  out.feature_names = raw.feature_names;
  out.target_index = raw.target_index;
  out.stats = raw.stats;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto r = raw.row(i);
    const bool ok = raw.timestamps[i] != kInvalidTimestamp &&
                    std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
    if (!ok) {
      ++dropped;
      continue;
    }
    out.timestamps.push_back(raw.timestamps[i]);
    out.features.insert(out.features.end(), r.begin(), r.end());
  }
  out.stats.dropped_rows += dropped;
  if (out.stats.raw_rows == 0) out.stats.raw_rows = raw.rows();
  return out;
}

TimeSeriesFrame load_household_csv(const std::filesystem::path& path) {
  TimeSeriesFrame frame = clean_frame(parse_household_csv(path));
  if (frame.rows() == 0) {
    throw EmptyDataError("no usable rows in " + path.string() + " (" +
                         std::to_string(frame.stats.dropped_rows) + " dropped)");
  }
  frame.validate();
  return frame;
}

void write_household_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
  if (frame.feature_names != household_feature_names()) {
    throw UsageError("write_household_csv: frame does not carry the household columns");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "Date;Time";
  for (const auto& n : frame.feature_names) out << ';' << n;
  out << '\n';
  static constexpr const char* kFormats[] = {"%.3f", "%.3f", "%.2f", "%.1f", "%.0f", "%.0f", "%.0f"};
  std::string date, time;
  char buf[64];
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    format_timestamp(frame.timestamps[i], date, time);
    out << date << ';' << time;
    for (std::size_t c = 0; c < frame.dims(); ++c) {
      const double v = frame.row(i)[c];
      if (std::isnan(v)) {
        out << ";?";
      } else {
        std::snprintf(buf, sizeof buf, kFormats[c], v);
        out << ';' << buf;
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_frame_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "timestamp";
  for (const auto& n : frame.feature_names) out << ',' << n;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    out << frame.timestamps[i];
    for (double v : frame.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

double synth_daily_component(std::size_t minute, const SynthOptions& options) {
  const double phase = kTwoPi * static_cast<double>(minute % kMinutesPerDay) / kMinutesPerDay;
  // Trough around 04:00, evening peak; second harmonic gives a morning shoulder.
  return 1.0 + options.daily_amplitude * (std::sin(phase - 2.2) + 0.35 * std::sin(2.0 * phase - 1.0));
}

TimeSeriesFrame synth_stream(std::uint64_t seed, std::size_t n, std::size_t d,
                             const SynthOptions& options) {
  if (n == 0 || d == 0) throw ConfigError("synth_stream: n and d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> spike_height(1.0);
  const double spike_p = options.spikes_per_day / kMinutesPerDay;
  const double decay = options.spike_decay_minutes > 0 ? std::exp(-1.0 / options.spike_decay_minutes) : 0.0;

  std::vector<double> target(n);
  double ar = 0.0;
  double spike = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    ar = options.ar_coefficient * ar + options.noise_scale * gauss(rng);
    spike *= decay;
    if (unit(rng) < spike_p) spike += options.spike_amplitude * spike_height(rng);
    const double v = synth_daily_component(t, options) + ar + spike;
    target[t] = std::clamp(v, 0.0, 8.0);
  }

  TimeSeriesFrame frame;
  frame.target_index = 0;
  frame.feature_names.push_back("target");
  for (std::size_t c = 1; c < d; ++c) frame.feature_names.push_back("covariate_" + std::to_string(c));
  frame.timestamps.resize(n);
  frame.features.resize(n * d);
  for (std::size_t t = 0; t < n; ++t) {
    frame.timestamps[t] = kSynthEpochMinutes + static_cast<std::int64_t>(t);
    frame.features[t * d] = target[t];
    for (std::size_t c = 1; c < d; ++c) {
      const std::size_t lag = std::min<std::size_t>(t, 3 * c);
      const double base = target[t - lag];
      double v = 0.0;
      switch (c % 3) {
        case 1: v = 0.8 * base + 0.05 * gauss(rng); break;
        case 2: v = std::sqrt(base) + 0.05 * gauss(rng); break;
        default: v = 240.0 - 2.0 * base + 0.5 * gauss(rng); break;
      }
      frame.features[t * d + c] = v;
    }
  }
  frame.stats.raw_rows = n;
  return frame;
}

TimeSeriesFrame synth_household(std::uint64_t seed, std::size_t n, double missing_fraction) {
  if (n == 0) throw ConfigError("synth_household: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  TimeSeriesFrame frame;
  frame.feature_names = household_feature_names();
  frame.target_index = 0;
  frame.timestamps.resize(n);
  frame.features.resize(n * 7);

  struct Appliance {
    double starts_per_day;   // at peak occupancy
    double mean_minutes;
    double watt_hours;       // sub-meter reading per minute while on
    double kw;
  };
  // kitchen, laundry, water heater / AC
  const Appliance appliances[3] = {{3.0, 25.0, 37.0, 2.3}, {1.5, 40.0, 20.0, 1.2}, {8.0, 35.0, 17.0, 1.0}};
  double remaining[3] = {0.0, 0.0, 0.0};
  double ar = 0.0;
  double reactive_ar = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double phase = kTwoPi * static_cast<double>((t + 17 * 60 + 24) % kMinutesPerDay) / kMinutesPerDay;
    // Occupancy: low overnight, morning bump, strong evening peak.
    const double occupancy = std::clamp(
        0.45 + 0.35 * std::sin(phase - 2.2) + 0.2 * std::sin(2.0 * phase - 1.0), 0.05, 1.0);
    double sub[3];
    double appliance_kw = 0.0;
    for (int a = 0; a < 3; ++a) {
      if (remaining[a] <= 0.0 &&
          unit(rng) < occupancy * appliances[a].starts_per_day / kMinutesPerDay * 2.0) {
        remaining[a] = appliances[a].mean_minutes * expo(rng);
      }
      const bool on = remaining[a] > 0.0;
      remaining[a] -= 1.0;
      sub[a] = on ? std::max(0.0, std::round(appliances[a].watt_hours * (1.0 + 0.1 * gauss(rng))))
                  : (a == 1 && unit(rng) < 0.3 ? 1.0 : 0.0);
      appliance_kw += on ? appliances[a].kw : 0.0;
    }
    // Unmetered base load: heteroscedastic, noisier when the house is busy.
    ar = 0.85 * ar + 0.06 * (0.3 + occupancy) * gauss(rng);
    const double base_kw = 0.25 + 1.1 * occupancy * occupancy + ar;
    const double active = std::clamp(base_kw + appliance_kw, 0.076, 11.0);
    reactive_ar = 0.9 * reactive_ar + 0.01 * gauss(rng);
    const double reactive = std::clamp(0.1 + 0.03 * active + reactive_ar, 0.0, 1.4);
    const double voltage = 241.0 - 1.2 * active + 1.5 * std::sin(phase) + 0.6 * gauss(rng);
    const double intensity = std::round(active * 1000.0 / voltage * 5.0) / 5.0;

    frame.timestamps[t] = kSynthEpochMinutes + static_cast<std::int64_t>(t);
    double* row = &frame.features[t * 7];
    row[0] = std::round(active * 1000.0) / 1000.0;
    row[1] = std::round(reactive * 1000.0) / 1000.0;
    row[2] = std::round(voltage * 100.0) / 100.0;
    row[3] = intensity;
    row[4] = sub[0];
    row[5] = sub[1];
    row[6] = sub[2];
    if (unit(rng) < missing_fraction) {
      for (int c = 0; c < 7; ++c) row[c] = kNaN;
    }
  }
  frame.stats.raw_rows = n;
  return frame;
}

}  // namespace streamattack
