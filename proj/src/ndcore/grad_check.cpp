#include "trivqa/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace trivqa::nd {

bool GradCheckReport::passed() const {
  return !blocks.empty() && std::all_of(blocks.begin(), blocks.end(), [](const BlockCheck& b) { return b.passed; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.rel_error);
  return m;
}

namespace {

double evaluate(const LossBuilder& build, const ParamStore& params, const std::vector<Tensor>& detached) {
  Tape tape;
  tape.replay_detached(detached);
  return tape.value(build(tape, params)).item();
}

}  // namespace

GradCheckReport grad_check(ParamStore& params, const LossBuilder& build, double tolerance, double step,
                           const GradientHook& hook) {
  Tape tape;
  const Var loss = build(tape, params);
  ParamGrads analytic = tape.backward(loss).collect(params);
  const std::vector<Tensor> detached = tape.detached_values();
  if (hook) hook(analytic);

  GradCheckReport report;
  report.tolerance = tolerance;
  for (ParamId id = 0; id < params.size(); ++id) {
    BlockCheck check;
    check.name = params.name(id);
    auto values = params.value(id).data();
    check.elements = values.size();
    std::vector<double> numeric(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(build, params, detached);
      values[i] = saved - step;
      const double down = evaluate(build, params, detached);
      values[i] = saved;
      numeric[i] = (up - down) / (2.0 * step);
    }
    auto a = analytic.values[id].data();
    double scale = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      check.max_abs_error = std::max(check.max_abs_error, std::abs(a[i] - numeric[i]));
      scale = std::max({scale, std::abs(a[i]), std::abs(numeric[i])});
    }
    check.rel_error = scale < 1e-12 ? 0.0 : check.max_abs_error / scale;
    check.passed = std::isfinite(check.rel_error) && check.rel_error < tolerance;
    report.blocks.push_back(std::move(check));
  }
  return report;
}

}  // namespace trivqa::nd
