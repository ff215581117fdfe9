#include "streamattack/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "streamattack/error.hpp"

namespace streamattack {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor2 checked_gradient(const GradientFn& grad, const Tensor2& x, const AttackConfig& config) {
  Tensor2 g = grad(x);
  if (!g.same_shape(x)) throw AttackError("gradient shape does not match the window");
  if (!all_finite(g.values())) throw AttackError("non-finite input gradient");
  if (config.scope == AttackScope::NewestRow) {
    for (std::size_t r = 0; r + 1 < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = 0.0;
    }
  }
  return g;
}

// Moves `x` by step * sign(direction) and projects onto the feasible set
// around `origin`.
void signed_step(Tensor2& x, const Tensor2& direction, const Tensor2& origin, double step,
                 double epsilon) {
  auto xv = x.values();
  auto dv = direction.values();
  auto ov = origin.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double lo = std::max(ov[i] - epsilon, std::min(0.0, ov[i]));
    const double hi = std::min(ov[i] + epsilon, std::max(1.0, ov[i]));
    xv[i] = std::clamp(xv[i] + step * sign(dv[i]), lo, hi);
  }
}

PerturbationRecord finish(const Tensor2& x, Tensor2 x_adv, const AttackConfig& config, std::size_t t) {
  PerturbationRecord r;
  r.t = t;
  r.linf = linf_distance(x, x_adv);
  r.x_clean = x;
  r.x_adv = std::move(x_adv);
  r.kind = config.kind;
  r.epsilon = config.epsilon;
  return r;
}

}  // namespace

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::Fgsm: return "FGSM";
    case AttackKind::Bim: return "BIM";
    case AttackKind::NiFgsm: return "NI-FGSM";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& name) {
  std::string n;
  for (char c : name) {
    if (c != '-' && c != '_') n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (n == "fgsm") return AttackKind::Fgsm;
  if (n == "bim") return AttackKind::Bim;
  if (n == "nifgsm") return AttackKind::NiFgsm;
  throw ConfigError("unknown attack kind '" + name + "' (expected fgsm, bim or nifgsm)");
}

double AttackConfig::effective_step() const {
  if (kind == AttackKind::Fgsm) return epsilon;
  return step > 0.0 ? step : epsilon / static_cast<double>(iterations);
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
  if (kind == AttackKind::Fgsm) return;
  if (iterations == 0) throw ConfigError("iterative attacks need iterations >= 1");
  if (!(momentum >= 0.0)) throw ConfigError("momentum must be >= 0");
  if (effective_step() * static_cast<double>(iterations) < epsilon * (1.0 - 1e-12)) {
    throw ConfigError("step * iterations must reach epsilon");
  }
}

GradientFn squared_error_gradient(const ForecasterModel& model, double y_true) {
  return [&model, y_true](const Tensor2& x) { return model.input_gradient(x, y_true); };
}

PerturbationRecord fgsm(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                        std::size_t t) {
  config.validate();
  const Tensor2 g = checked_gradient(grad, x, config);
  Tensor2 x_adv = x;
  signed_step(x_adv, g, x, config.epsilon, config.epsilon);
  return finish(x, std::move(x_adv), config, t);
}

PerturbationRecord bim(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                       std::size_t t) {
  config.validate();
  const double step = config.effective_step();
  Tensor2 x_adv = x;
  for (std::size_t i = 0; i < config.iterations; ++i) {
    const Tensor2 g = checked_gradient(grad, x_adv, config);
    signed_step(x_adv, g, x, step, config.epsilon);
  }
  return finish(x, std::move(x_adv), config, t);
}

PerturbationRecord nifgsm(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                          std::size_t t) {
  config.validate();
  const double step = config.effective_step();
  const double mu = config.momentum;
  Tensor2 x_adv = x;
  Tensor2 g(x.rows(), x.cols());
  for (std::size_t i = 0; i < config.iterations; ++i) {
    // Nesterov lookahead; not projected, it only picks where to take the gradient.
    Tensor2 lookahead = x_adv;
    for (std::size_t j = 0; j < g.size(); ++j) lookahead.values()[j] += step * mu * g.values()[j];
    const Tensor2 grad_at = checked_gradient(grad, lookahead, config);
    double l1 = 0.0;
    for (double v : grad_at.values()) l1 += std::abs(v);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double normalized = l1 > 0.0 ? grad_at.values()[j] / l1 : 0.0;
      g.values()[j] = mu * g.values()[j] + normalized;
    }
    signed_step(x_adv, g, x, step, config.epsilon);
  }
  return finish(x, std::move(x_adv), config, t);
}

PerturbationRecord run_attack(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                              std::size_t t) {
  switch (config.kind) {
    case AttackKind::Fgsm: return fgsm(grad, x, config, t);
    case AttackKind::Bim: return bim(grad, x, config, t);
    case AttackKind::NiFgsm: return nifgsm(grad, x, config, t);
  }
  throw ConfigError("unknown attack kind");
}

}  // namespace streamattack
