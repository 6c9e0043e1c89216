#include "trivqa/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace trivqa::nd {

void OptimizerConfig::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("optimizer.base_lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optimizer.momentum must lie in [0, 1)");
  if (!(decay_factor > 0.0) || !std::isfinite(decay_factor)) {
    throw std::invalid_argument("optimizer.decay_factor must be > 0");
  }
  if (decay_period < 1) throw std::invalid_argument("optimizer.decay_period must be >= 1");
}

double learning_rate(const OptimizerConfig& cfg, int epoch) {
  if (epoch < 0) throw std::invalid_argument("learning_rate: negative epoch");
  int decays = epoch / cfg.decay_period;
  if (cfg.decay_once && decays > 1) decays = 1;
  return cfg.base_lr * std::pow(cfg.decay_factor, decays);
}

SgdMomentum::SgdMomentum(OptimizerConfig cfg, const ParamStore& params) : cfg_(cfg) {
  cfg_.validate();
  velocity_.reserve(params.size());
  for (const auto& b : params.blocks()) velocity_.emplace_back(b.value.shape(), 0.0);
}

StepResult SgdMomentum::step(ParamStore& params, const ParamGrads& grads, int epoch) {
  if (grads.values.size() != params.size() || velocity_.size() != params.size()) {
    return {false, "gradient count " + std::to_string(grads.values.size()) + " does not match " +
                       std::to_string(params.size()) + " parameter blocks"};
  }
  for (ParamId id = 0; id < params.size(); ++id) {
    const Tensor& g = grads.values[id];
    if (g.shape() != params.value(id).shape()) {
      return {false, "gradient shape " + shape_str(g.shape()) + " does not match parameter '" + params.name(id) +
                         "' " + shape_str(params.value(id).shape())};
    }
    if (!all_finite(g)) return {false, "non-finite gradient in parameter '" + params.name(id) + "'"};
  }

  const double lr = learning_rate(cfg_, epoch);
  for (ParamId id = 0; id < params.size(); ++id) {
    auto v = velocity_[id].data();
    auto p = params.value(id).data();
    auto g = grads.values[id].data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = cfg_.momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
  return {true, {}};
}

}  // namespace trivqa::nd
