#pragma once

#include <functional>
#include <string>
#include <vector>

#include "trivqa/tape.hpp"

namespace trivqa::nd {

/// Builds a scalar loss on a fresh tape, reading parameters from the store.
using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

/// Test hook applied to analytic gradients before comparison.
using GradientHook = std::function<void(ParamGrads&)>;

struct BlockCheck {
  std::string name;
  std::size_t elements = 0;
  double max_abs_error = 0.0;
  /// max_j |analytic_j - numeric_j| / max(max_j |analytic_j|, max_j |numeric_j|)
  double rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<BlockCheck> blocks;

  bool passed() const;
  double max_rel_error() const;
};

/// Compares tape gradients against central finite differences for every
/// parameter block. The relative error of a block is its largest elementwise
/// discrepancy scaled by the block's gradient magnitude; a block whose
/// analytic and numeric gradients are both below 1e-12 counts as exact.
/// Values detached with stop_gradient are frozen at the unperturbed point.
GradCheckReport grad_check(ParamStore& params, const LossBuilder& build, double tolerance, double step = 1e-5,
                           const GradientHook& hook = {});

}  // namespace trivqa::nd
