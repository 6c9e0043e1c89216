#pragma once

#include <string>
#include <vector>

#include "trivqa/tape.hpp"

namespace trivqa::nd {

struct OptimizerConfig {
  double base_lr = 0.001;
  double momentum = 0.9;
  double decay_factor = 0.1;
  int decay_period = 10;
  /// Decay once at `decay_period` instead of every `decay_period` epochs.
  bool decay_once = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// base_lr * decay_factor^floor(epoch / decay_period), or a single decay
/// when decay_once is set.
double learning_rate(const OptimizerConfig& cfg, int epoch);

struct StepResult {
  bool applied = false;
  std::string diagnostic;
};

/// SGD with heavy-ball momentum: v <- momentum * v + g; p <- p - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(OptimizerConfig cfg, const ParamStore& params);

  /// Applies one update. A gradient containing NaN/Inf rejects the whole
  /// step; parameters and velocity are left untouched.
  StepResult step(ParamStore& params, const ParamGrads& grads, int epoch);

  const OptimizerConfig& config() const { return cfg_; }
  const Tensor& velocity(ParamId id) const { return velocity_.at(id); }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> velocity_;
};

}  // namespace trivqa::nd
