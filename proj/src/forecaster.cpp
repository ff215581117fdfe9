#include "streamattack/forecaster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "streamattack/error.hpp"
#include "streamattack/hash.hpp"
#include "streamattack/kv.hpp"

namespace streamattack {

namespace {

constexpr char kModelMagic[8] = {'S', 'A', 'T', 'K', 'M', 'D', 'L', '1'};
constexpr std::uint32_t kModelFormatVersion = 1;

void add_into(ConvNetParams& acc, const ConvNetParams& g) {
  auto a = acc.blocks();
  auto b = g.blocks();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  }
}

void zero(ConvNetParams& p) {
  for (auto b : p.blocks()) std::fill(b.begin(), b.end(), 0.0);
}

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const ConvNetParams& like)
      : kind_(config.optimizer), lr_(config.learning_rate) {
    if (kind_ == OptimizerKind::Adam) {
      m_ = ConvNetParams::zeros(like.shape);
      v_ = ConvNetParams::zeros(like.shape);
    }
  }

  void step(ConvNetParams& params, ConvNetParams& grads) {
    auto p = params.blocks();
    auto g = grads.blocks();
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p[i].size(); ++j) p[i][j] -= lr_ * g[i][j];
      }
      return;
    }
    ++t_;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    auto m = m_.blocks();
    auto v = v_.blocks();
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < p[i].size(); ++j) {
        m[i][j] = b1 * m[i][j] + (1 - b1) * g[i][j];
        v[i][j] = b2 * v[i][j] + (1 - b2) * g[i][j] * g[i][j];
        p[i][j] -= lr_ * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
      }
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  long long t_ = 0;
  ConvNetParams m_, v_;
};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("model file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_u64(out, bits);
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::array<std::size_t, 8> shape_fields(const ConvNetShape& s) {
  return {s.window, s.features, s.filters, s.kernel_width, s.stride, s.pool, s.hidden, s.outputs};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(miscoverage > 0.0 && miscoverage < 1.0)) throw ConfigError("miscoverage must lie in (0,1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0 || epochs == 0) throw ConfigError("batch size and epochs must be >= 1");
}

std::string TrainConfig::canonical() const {
  std::ostringstream s;
  const auto& a = architecture;
  s << "window=" << a.window << "\nfeatures=" << a.features << "\nfilters=" << a.filters
    << "\nkernel_width=" << a.kernel_width << "\nstride=" << a.stride << "\npool=" << a.pool
    << "\nhidden=" << a.hidden << "\ndropout=" << exact(dropout)
    << "\nlearning_rate=" << exact(learning_rate) << "\nbatch_size=" << batch_size
    << "\nepochs=" << epochs << "\noptimizer=" << (optimizer == OptimizerKind::Adam ? "adam" : "sgd")
    << "\nmiscoverage=" << exact(miscoverage) << "\nshared_trunk=" << (shared_trunk ? 1 : 0)
    << "\nmin_samples=" << min_samples << "\n";
  return s.str();
}

ForecasterModel::ForecasterModel(TrainConfig config, std::uint64_t seed,
                                 std::vector<ConvNetParams> nets)
    : config_(std::move(config)), seed_(seed), nets_(std::move(nets)) {
  const std::size_t expected_nets = config_.shared_trunk ? 1 : 3;
  if (nets_.size() != expected_nets) throw ConfigError("model has the wrong number of networks");
  for (const auto& n : nets_) {
    if (n.shape.outputs != (config_.shared_trunk ? 3u : 1u)) {
      throw ConfigError("model network has the wrong number of outputs");
    }
    for (auto b : n.blocks()) {
      if (!all_finite(b)) throw ConfigError("model parameters contain non-finite values");
    }
  }
}

void ForecasterModel::check_input(const Tensor2& x) const {
  if (nets_.empty()) throw UsageError("model is empty");
  if (x.rows() != window() || x.cols() != features()) {
    throw UsageError("window is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                     ", model expects " + std::to_string(window()) + "x" +
                     std::to_string(features()));
  }
}

ForecastOutput ForecasterModel::predict(const Tensor2& x) const {
  check_input(x);
  ForecastOutput out;
  if (config_.shared_trunk) {
    const auto o = network_predict(nets_[0], x);
    out = {o[0], o[1], o[2]};
  } else {
    out = {network_predict(nets_[0], x)[0], network_predict(nets_[1], x)[0],
           network_predict(nets_[2], x)[0]};
  }
  if (out.q_lo > out.q_hi) std::swap(out.q_lo, out.q_hi);
  return out;
}

Tensor2 ForecasterModel::input_gradient(const Tensor2& x, double y_true, double scale) const {
  check_input(x);
  const ConvNetParams& net = nets_[0];
  const ForwardTape tape = network_forward(net, x);
  std::vector<double> d_out(net.shape.outputs, 0.0);
  d_out[0] = scale * squared_error_grad(tape.outputs[0], y_true);
  return network_backward(net, tape, d_out).d_input;
}

Activations ForecasterModel::activations(const Tensor2& x) const {
  check_input(x);
  const ForwardTape tape = network_forward(nets_[0], x);
  Activations a;
  a.pooled.assign(tape.flat.values().begin(), tape.flat.values().end());
  a.hidden.assign(tape.hidden_act.values().begin(), tape.hidden_act.values().end());
  return a;
}

std::uint64_t ForecasterModel::parameter_hash() const {
  Fnv1a h;
  for (const auto& n : nets_) {
    for (auto b : n.blocks()) h.update(b);
  }
  return h.digest();
}

ForecasterModel train_forecaster(std::span<const WindowSample> samples, const TrainConfig& config,
                                 std::uint64_t seed) {
  config.validate();
  if (samples.size() < std::max<std::size_t>(config.min_samples, 1)) {
    throw EmptyDataError("training needs at least " + std::to_string(config.min_samples) +
                         " samples, got " + std::to_string(samples.size()));
  }
  ConvNetShape shape = config.architecture;
  shape.window = samples[0].x.rows();
  shape.features = samples[0].x.cols();
  shape.outputs = config.shared_trunk ? 3 : 1;
  shape.validate();
  for (const auto& s : samples) {
    if (s.x.rows() != shape.window || s.x.cols() != shape.features) {
      throw UsageError("training samples have inconsistent shapes");
    }
  }
  TrainConfig effective = config;
  effective.architecture = shape;

  std::mt19937_64 init_rng(derive_seed(seed, 0));
  std::mt19937_64 shuffle_rng(derive_seed(seed, 1));
  std::mt19937_64 dropout_rng(derive_seed(seed, 2));

  const std::size_t n_nets = config.shared_trunk ? 1 : 3;
  std::vector<ConvNetParams> nets;
  std::vector<ConvNetParams> grads;
  std::vector<Optimizer> optimizers;
  for (std::size_t i = 0; i < n_nets; ++i) {
    nets.push_back(ConvNetParams::he_uniform(shape, init_rng));
    grads.push_back(ConvNetParams::zeros(shape));
    optimizers.emplace_back(effective, nets.back());
  }
  const double tau_lo = config.miscoverage / 2.0;
  const double tau_hi = 1.0 - config.miscoverage / 2.0;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) zero(g);
      // Non-finite activations surface as ConfigError from Tensor2.
      try {
        for (std::size_t k = start; k < end; ++k) {
          const WindowSample& s = samples[order[k]];
          if (config.shared_trunk) {
            const ForwardTape tape = network_forward(nets[0], s.x, config.dropout, &dropout_rng);
            const auto& o = tape.outputs;
            epoch_loss += squared_error(o[0], s.y) + pinball_loss(s.y, o[1], tau_lo) +
                          pinball_loss(s.y, o[2], tau_hi);
            const std::array<double, 3> d = {inv_b * squared_error_grad(o[0], s.y),
                                             inv_b * pinball_grad(s.y, o[1], tau_lo),
                                             inv_b * pinball_grad(s.y, o[2], tau_hi)};
            add_into(grads[0], network_backward(nets[0], tape, d).d_params);
          } else {
            for (std::size_t h = 0; h < 3; ++h) {
              const ForwardTape tape = network_forward(nets[h], s.x, config.dropout, &dropout_rng);
              const double o = tape.outputs[0];
              double d = 0.0;
              if (h == 0) {
                epoch_loss += squared_error(o, s.y);
                d = squared_error_grad(o, s.y);
              } else {
                const double tau = h == 1 ? tau_lo : tau_hi;
                epoch_loss += pinball_loss(s.y, o, tau);
                d = pinball_grad(s.y, o, tau);
              }
              const std::array<double, 1> dd = {inv_b * d};
              add_into(grads[h], network_backward(nets[h], tape, dd).d_params);
            }
          }
        }
      } catch (const ConfigError& e) {
        throw TrainingError(std::string("training diverged at epoch ") + std::to_string(epoch) + ": " +
                                e.what(),
                            static_cast<int>(epoch));
      }
      for (std::size_t i = 0; i < n_nets; ++i) optimizers[i].step(nets[i], grads[i]);
    }
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("training diverged (loss is not finite) at epoch " + std::to_string(epoch),
                          static_cast<int>(epoch));
    }
    for (const auto& n : nets) {
      for (auto b : n.blocks()) {
        if (!all_finite(b)) {
          throw TrainingError("training diverged (non-finite parameters) at epoch " +
                                  std::to_string(epoch),
                              static_cast<int>(epoch));
        }
      }
    }
  }
  return ForecasterModel(effective, seed, std::move(nets));
}

void save_model(const ForecasterModel& model, const std::filesystem::path& stem) {
  auto bin_path = stem;
  bin_path += ".bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  bin.write(kModelMagic, sizeof kModelMagic);
  write_u64(bin, kModelFormatVersion);
  write_u64(bin, model.networks().size());
  for (const auto& net : model.networks()) {
    for (std::size_t f : shape_fields(net.shape)) write_u64(bin, f);
    const auto blocks = net.blocks();
    write_u64(bin, blocks.size());
    for (auto b : blocks) {
      write_u64(bin, b.size());
      for (double v : b) write_f64(bin, v);
    }
  }
  if (!bin) throw IoError("failed writing " + bin_path.string());

  auto manifest_path = stem;
  manifest_path += ".manifest";
  std::ofstream man(manifest_path);
  if (!man) throw IoError("cannot write " + manifest_path.string());
  Fnv1a config_hash;
  config_hash.update(model.config().canonical());
  man << "# forecaster manifest\nformat_version=" << kModelFormatVersion << "\nseed=" << model.seed()
      << "\nnetworks=" << model.networks().size() << "\n"
      << model.config().canonical() << "outputs=" << model.networks()[0].shape.outputs
      << "\nparameters=" << model.networks()[0].parameter_count() * model.networks().size()
      << "\nconfig_hash=" << hex64(config_hash.digest())
      << "\nparameter_hash=" << hex64(model.parameter_hash()) << "\n";
  if (!man) throw IoError("failed writing " + manifest_path.string());
}

ForecasterModel load_model(const std::filesystem::path& stem) {
  auto manifest_path = stem;
  manifest_path += ".manifest";
  const auto kv = read_key_values(manifest_path);
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest missing key " + key);
    return it->second;
  };
  if (parse_int(get("format_version"), "format_version") != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + get("format_version"));
  }
  TrainConfig config;
  auto& a = config.architecture;
  a.window = static_cast<std::size_t>(parse_int(get("window"), "window"));
  a.features = static_cast<std::size_t>(parse_int(get("features"), "features"));
  a.filters = static_cast<std::size_t>(parse_int(get("filters"), "filters"));
  a.kernel_width = static_cast<std::size_t>(parse_int(get("kernel_width"), "kernel_width"));
  a.stride = static_cast<std::size_t>(parse_int(get("stride"), "stride"));
  a.pool = static_cast<std::size_t>(parse_int(get("pool"), "pool"));
  a.hidden = static_cast<std::size_t>(parse_int(get("hidden"), "hidden"));
  a.outputs = static_cast<std::size_t>(parse_int(get("outputs"), "outputs"));
  config.dropout = parse_double(get("dropout"), "dropout");
  config.learning_rate = parse_double(get("learning_rate"), "learning_rate");
  config.batch_size = static_cast<std::size_t>(parse_int(get("batch_size"), "batch_size"));
  config.epochs = static_cast<std::size_t>(parse_int(get("epochs"), "epochs"));
  config.optimizer = get("optimizer") == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
  config.miscoverage = parse_double(get("miscoverage"), "miscoverage");
  config.shared_trunk = get("shared_trunk") == "1";
  config.min_samples = static_cast<std::size_t>(parse_int(get("min_samples"), "min_samples"));
  const auto seed = static_cast<std::uint64_t>(std::stoull(get("seed")));

  auto bin_path = stem;
  bin_path += ".bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string());
  char magic[8];
  if (!bin.read(magic, 8) || !std::equal(magic, magic + 8, kModelMagic)) {
    throw FormatError(bin_path.string() + " is not a forecaster parameter file");
  }
  if (read_u64(bin) != kModelFormatVersion) throw FormatError("unsupported parameter file version");
  const std::uint64_t n_nets = read_u64(bin);
  if (n_nets == 0 || n_nets > 3) throw FormatError("bad network count in parameter file");
  std::vector<ConvNetParams> nets;
  for (std::uint64_t i = 0; i < n_nets; ++i) {
    ConvNetShape s;
    s.window = read_u64(bin);
    s.features = read_u64(bin);
    s.filters = read_u64(bin);
    s.kernel_width = read_u64(bin);
    s.stride = read_u64(bin);
    s.pool = read_u64(bin);
    s.hidden = read_u64(bin);
    s.outputs = read_u64(bin);
    if (s != config.architecture) throw FormatError("parameter file shape disagrees with manifest");
    ConvNetParams p = ConvNetParams::zeros(s);
    auto blocks = p.blocks();
    if (read_u64(bin) != blocks.size()) throw FormatError("parameter block count mismatch");
    for (auto b : blocks) {
      if (read_u64(bin) != b.size()) throw FormatError("parameter block size mismatch");
      for (auto& v : b) v = read_f64(bin);
    }
    nets.push_back(std::move(p));
  }
  ForecasterModel model(config, seed, std::move(nets));
  if (hex64(model.parameter_hash()) != get("parameter_hash")) {
    throw FormatError("parameter hash mismatch between " + bin_path.string() + " and manifest");
  }
  return model;
}

}  // namespace streamattack
