#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "streamattack/forecaster.hpp"
#include "streamattack/tensor.hpp"

namespace streamattack {

enum class AttackKind { Fgsm, Bim, NiFgsm };

const char* to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

enum class AttackScope {
  WholeWindow,  // every cell of the w x d window
  NewestRow,    // only the most recent time step
};

struct AttackConfig {
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 0.1;
  std::size_t iterations = 10;
  /// Per-iteration step; <= 0 means epsilon / iterations.
  double step = 0.0;
  double momentum = 1.0;
  AttackScope scope = AttackScope::WholeWindow;

  double effective_step() const;
  /// Throws ConfigError for eps < 0, zero iterations, negative momentum, or
  /// an iterative budget that cannot reach epsilon.
  void validate() const;
};

/// The three epsilon values of the comparison grid.
inline constexpr double kGridEpsilons[3] = {0.05, 0.10, 0.15};

struct PerturbationRecord {
  std::size_t t = 0;
  Tensor2 x_clean;
  Tensor2 x_adv;
  double linf = 0.0;
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 0.0;
};

/// Gradient of the attack loss with respect to the window.
using GradientFn = std::function<Tensor2(const Tensor2&)>;

/// The attack loss is the squared error of the point forecast against y_true.
GradientFn squared_error_gradient(const ForecasterModel& model, double y_true);

// Each step is projected onto the epsilon ball around x and onto the box
// [min(0, x), max(1, x)] per cell; for x in [0,1] that is the [0,1] box.
PerturbationRecord fgsm(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                        std::size_t t = 0);
PerturbationRecord bim(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                       std::size_t t = 0);
PerturbationRecord nifgsm(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                          std::size_t t = 0);

/// Dispatches on config.kind.
PerturbationRecord run_attack(const GradientFn& grad, const Tensor2& x, const AttackConfig& config,
                              std::size_t t = 0);

inline PerturbationRecord run_attack(const ForecasterModel& model, const Tensor2& x, double y_true,
                                     const AttackConfig& config, std::size_t t = 0) {
  return run_attack(squared_error_gradient(model, y_true), x, config, t);
}

}  // namespace streamattack
