#include "streamattack/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "streamattack/error.hpp"
#include "streamattack/hash.hpp"
#include "streamattack/kv.hpp"

namespace streamattack {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void LidConfig::validate() const {
  if (k == 0 || k >= batch) throw ConfigError("LID needs 1 <= k < batch");
  if (layer_count() == 0) throw ConfigError("LID needs at least one layer");
}

double lid_from_distances(std::span<const double> distances) {
  if (distances.empty()) throw UsageError("LID needs at least one distance");
  double r_max = 0.0;
  for (double r : distances) r_max = std::max(r_max, std::max(r, kLidDistanceFloor));
  double mean_log = 0.0;
  for (double r : distances) mean_log += std::log(std::max(r, kLidDistanceFloor) / r_max);
  mean_log /= static_cast<double>(distances.size());
  if (mean_log >= 0.0) return kLidCap;
  return std::min(-1.0 / mean_log, kLidCap);
}

double lid_estimate(std::span<const double> query, const std::vector<std::vector<double>>& reference,
                    std::size_t k, std::optional<std::size_t> exclude) {
  const std::size_t available = reference.size() - (exclude && *exclude < reference.size() ? 1 : 0);
  if (k == 0 || available < k) {
    throw UsageError("LID: reference batch smaller than k");
  }
  std::vector<double> d;
  d.reserve(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (exclude && *exclude == i) continue;
    if (reference[i].size() != query.size()) throw UsageError("LID: dimension mismatch");
    d.push_back(std::sqrt(squared_distance(query, reference[i])));
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
  d.resize(k);
  std::sort(d.begin(), d.end());
  return lid_from_distances(d);
}

LidFeaturizer::LidFeaturizer(const ForecasterModel& model, std::span<const Tensor2> reference_windows,
                             LidConfig config)
    : model_(&model), config_(config) {
  config_.validate();
  if (reference_windows.size() < config_.batch) {
    throw EmptyDataError("LID reference batch needs " + std::to_string(config_.batch) +
                         " windows, got " + std::to_string(reference_windows.size()));
  }
  for (std::size_t i = 0; i < config_.batch; ++i) {
    Activations a = model.activations(reference_windows[i]);
    pooled_ref_.push_back(std::move(a.pooled));
    hidden_ref_.push_back(std::move(a.hidden));
  }
}

std::vector<double> LidFeaturizer::featurize(const Tensor2& window) const {
  if (!has_reference()) throw UsageError("featurize: no reference batch registered");
  const Activations a = model_->activations(window);
  std::vector<double> f;
  if (config_.use_pooled) f.push_back(lid_estimate(a.pooled, pooled_ref_, config_.k));
  if (config_.use_hidden) f.push_back(lid_estimate(a.hidden, hidden_ref_, config_.k));
  return f;
}

BinaryMetrics binary_metrics(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
  if (truth.size() != predicted.size()) throw UsageError("binary_metrics: length mismatch");
  BinaryMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] && predicted[i]) ++m.tp;
    else if (!truth[i] && predicted[i]) ++m.fp;
    else if (truth[i] && !predicted[i]) ++m.fn;
    else ++m.tn;
  }
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.accuracy = ratio(m.tp + m.tn, truth.size());
  return m;
}

double DetectorModel::score(std::span<const double> features) const {
  if (features.size() != weights.size()) throw UsageError("detector: feature count mismatch");
  double z = bias;
  for (std::size_t i = 0; i < features.size(); ++i) {
    z += weights[i] * (features[i] - feature_mean[i]) / feature_scale[i];
  }
  return sigmoid(z);
}

DetectorFit fit_detector_features(const std::vector<std::vector<double>>& clean,
                                  const std::vector<std::vector<double>>& adversarial,
                                  const LidConfig& config, std::uint64_t seed) {
  if (clean.empty() || adversarial.empty()) {
    throw TrainingError("detector needs both clean and adversarial samples", -1);
  }
  const std::size_t dims = clean.front().size();
  if (dims != config.layer_count()) throw UsageError("detector: feature count does not match layers");

  std::vector<const std::vector<double>*> xs;
  std::vector<bool> ys;
  for (const auto& c : clean) xs.push_back(&c), ys.push_back(false);
  for (const auto& a : adversarial) xs.push_back(&a), ys.push_back(true);
  for (const auto* x : xs) {
    if (x->size() != dims) throw UsageError("detector: inconsistent feature length");
  }

  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_train = order.size() - order.size() / 5;
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> heldout(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  if (heldout.empty()) heldout = train;

  DetectorModel m;
  m.lid_config = config;
  m.feature_mean.assign(dims, 0.0);
  m.feature_scale.assign(dims, 0.0);
  for (std::size_t i : train) {
    for (std::size_t j = 0; j < dims; ++j) m.feature_mean[j] += (*xs[i])[j];
  }
  for (auto& v : m.feature_mean) v /= static_cast<double>(train.size());
  for (std::size_t i : train) {
    for (std::size_t j = 0; j < dims; ++j) {
      const double d = (*xs[i])[j] - m.feature_mean[j];
      m.feature_scale[j] += d * d;
    }
  }
  for (auto& v : m.feature_scale) {
    v = std::sqrt(v / static_cast<double>(train.size()));
    if (!(v > 0.0)) v = 1.0;
  }

  // Full-batch gradient descent on the mean logistic loss.
  m.weights.assign(dims, 0.0);
  std::vector<std::vector<double>> z(train.size(), std::vector<double>(dims));
  for (std::size_t r = 0; r < train.size(); ++r) {
    for (std::size_t j = 0; j < dims; ++j) {
      z[r][j] = ((*xs[train[r]])[j] - m.feature_mean[j]) / m.feature_scale[j];
    }
  }
  constexpr int kIterations = 2000;
  constexpr double kRate = 0.5;
  std::vector<double> gw(dims);
  for (int it = 0; it < kIterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t r = 0; r < train.size(); ++r) {
      double s = m.bias;
      for (std::size_t j = 0; j < dims; ++j) s += m.weights[j] * z[r][j];
      const double err = sigmoid(s) - (ys[train[r]] ? 1.0 : 0.0);
      for (std::size_t j = 0; j < dims; ++j) gw[j] += err * z[r][j];
      gb += err;
    }
    const double inv = 1.0 / static_cast<double>(train.size());
    for (std::size_t j = 0; j < dims; ++j) m.weights[j] -= kRate * gw[j] * inv;
    m.bias -= kRate * gb * inv;
  }

  // Threshold: maximize held-out F1 over the held-out scores.
  std::vector<double> scores;
  std::vector<bool> truth;
  for (std::size_t i : heldout) {
    scores.push_back(m.score(*xs[i]));
    truth.push_back(ys[i]);
  }
  std::vector<double> candidates = scores;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  DetectorFit fit;
  double best_f1 = -1.0;
  std::vector<bool> pred(scores.size());
  for (double c : candidates) {
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= c;
    const BinaryMetrics bm = binary_metrics(truth, pred);
    if (bm.f1 > best_f1) {
      best_f1 = bm.f1;
      m.threshold = c;
      fit.heldout = bm;
    }
  }
  fit.model = std::move(m);
  return fit;
}

DetectorFit fit_detector(const LidFeaturizer& featurizer, std::span<const Tensor2> clean,
                         std::span<const Tensor2> adversarial, std::uint64_t seed) {
  std::vector<std::vector<double>> fc, fa;
  fc.reserve(clean.size());
  fa.reserve(adversarial.size());
  for (const auto& w : clean) fc.push_back(featurizer.featurize(w));
  for (const auto& w : adversarial) fa.push_back(featurizer.featurize(w));
  return fit_detector_features(fc, fa, featurizer.config(), seed);
}

void save_detector(const DetectorModel& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + exact(v[i]);
    return s;
  };
  out << "# LID detector\nk=" << d.lid_config.k << "\nbatch=" << d.lid_config.batch
      << "\nuse_pooled=" << d.lid_config.use_pooled << "\nuse_hidden=" << d.lid_config.use_hidden
      << "\nfeature_mean=" << list(d.feature_mean) << "\nfeature_scale=" << list(d.feature_scale)
      << "\nweights=" << list(d.weights) << "\nbias=" << exact(d.bias)
      << "\nthreshold=" << exact(d.threshold) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

DetectorModel load_detector(const std::filesystem::path& path) {
  const auto kv = read_key_values(path);
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": missing " + key);
    return it->second;
  };
  auto list = [&](const std::string& key) {
    std::vector<double> v;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(parse_double(item, key));
    return v;
  };
  DetectorModel d;
  d.lid_config.k = static_cast<std::size_t>(parse_int(get("k"), "k"));
  d.lid_config.batch = static_cast<std::size_t>(parse_int(get("batch"), "batch"));
  d.lid_config.use_pooled = get("use_pooled") == "1";
  d.lid_config.use_hidden = get("use_hidden") == "1";
  d.lid_config.validate();
  d.feature_mean = list("feature_mean");
  d.feature_scale = list("feature_scale");
  d.weights = list("weights");
  d.bias = parse_double(get("bias"), "bias");
  d.threshold = parse_double(get("threshold"), "threshold");
  const std::size_t n = d.lid_config.layer_count();
  if (d.weights.size() != n || d.feature_mean.size() != n || d.feature_scale.size() != n) {
    throw FormatError(path.string() + ": weight vector length does not match selected layers");
  }
  return d;
}

}  // namespace streamattack
