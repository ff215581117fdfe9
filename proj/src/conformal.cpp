#include "streamattack/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "streamattack/error.hpp"
#include "streamattack/kv.hpp"
#include "streamattack/quantile.hpp"

namespace streamattack {

double conformity_score(double q_lo, double q_hi, double y) { return std::max(q_lo - y, y - q_hi); }

ConformalCalibrator ConformalCalibrator::from_scores(std::vector<double> scores, double miscoverage) {
  if (!(miscoverage > 0.0 && miscoverage < 1.0)) throw ConfigError("miscoverage must lie in (0,1)");
  if (scores.empty()) throw EmptyDataError("calibration set is empty");
  if (!all_finite(scores)) throw ConfigError("calibration scores must be finite");
  ConformalCalibrator c;
  c.miscoverage_ = miscoverage;
  const double n = static_cast<double>(scores.size());
  const double level = (1.0 - miscoverage) * (1.0 + 1.0 / n);
  c.correction_ = nominal_rank_quantile(scores, level);
  c.scores_ = std::move(scores);
  return c;
}

IntervalRecord ConformalCalibrator::interval(double q_lo, double q_hi) const {
  if (q_lo > q_hi) throw UsageError("conformal interval needs q_lo <= q_hi");
  IntervalRecord r{q_lo - correction_, q_hi + correction_, 0.0};
  if (r.lo > r.hi) {
    const double mid = 0.5 * (q_lo + q_hi);
    r.lo = r.hi = mid;
  }
  r.width = r.hi - r.lo;
  return r;
}

ConformalCalibrator calibrate(const ForecasterModel& model, std::span<const WindowSample> calib,
                              double miscoverage) {
  if (calib.empty()) throw EmptyDataError("calibration set is empty");
  std::vector<double> scores;
  scores.reserve(calib.size());
  for (const auto& s : calib) {
    const ForecastOutput f = model.predict(s.x);
    scores.push_back(conformity_score(f.q_lo, f.q_hi, s.y));
  }
  return ConformalCalibrator::from_scores(std::move(scores), miscoverage);
}

IntervalRecord conformal_interval(const ConformalCalibrator& calibrator, double q_lo, double q_hi) {
  return calibrator.interval(q_lo, q_hi);
}

void save_calibrator(const ConformalCalibrator& calibrator, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# conformal calibrator\nmiscoverage=" << exact(calibrator.miscoverage())
      << "\ncorrection=" << exact(calibrator.correction())
      << "\ncalib_size=" << calibrator.calib_size() << "\nscores=";
  for (std::size_t i = 0; i < calibrator.scores().size(); ++i) {
    out << (i ? "," : "") << exact(calibrator.scores()[i]);
  }
  out << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

ConformalCalibrator load_calibrator(const std::filesystem::path& path) {
  const auto kv = read_key_values(path);
  for (const char* key : {"miscoverage", "correction", "calib_size", "scores"}) {
    if (!kv.count(key)) throw FormatError(path.string() + ": missing " + key);
  }
  std::vector<double> scores;
  std::stringstream ss(kv.at("scores"));
  std::string item;
  while (std::getline(ss, item, ',')) scores.push_back(parse_double(item, "scores"));
  if (static_cast<long long>(scores.size()) != parse_int(kv.at("calib_size"), "calib_size")) {
    throw FormatError(path.string() + ": calib_size does not match score count");
  }
  auto c = ConformalCalibrator::from_scores(std::move(scores),
                                            parse_double(kv.at("miscoverage"), "miscoverage"));
  if (c.correction() != parse_double(kv.at("correction"), "correction")) {
    throw FormatError(path.string() + ": stored correction is not the order statistic of its scores");
  }
  return c;
}

}  // namespace streamattack
