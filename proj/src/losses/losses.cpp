#include "trivqa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trivqa::loss {

namespace {

constexpr std::array<AblationMode, 6> kModes{AblationMode::baseline, AblationMode::rev_q, AblationMode::rev_v,
                                             AblationMode::rev_both, AblationMode::sfr, AblationMode::full};
constexpr std::array<Term, kTermCount> kTerms{Term::ce_forward, Term::rev_q,         Term::rev_v,
                                              Term::sfr_q_ce,   Term::sfr_v_ce,      Term::consistency_q,
                                              Term::consistency_v};

double log_sum_exp(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  return mx + std::log(z);
}

}  // namespace

const char* to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::baseline: return "baseline";
    case AblationMode::rev_q: return "+rev_q";
    case AblationMode::rev_v: return "+rev_v";
    case AblationMode::rev_both: return "+rev_both";
    case AblationMode::sfr: return "+sfr";
    case AblationMode::full: return "full";
  }
  return "?";
}

AblationMode parse_ablation_mode(const std::string& text) {
  for (auto m : kModes) {
    const std::string name = to_string(m);
    if (text == name || (name.front() == '+' && text == name.substr(1))) return m;
  }
  throw std::invalid_argument("unknown ablation mode '" + text + "'");
}

std::span<const AblationMode> all_modes() { return kModes; }

const char* to_string(Term term) {
  switch (term) {
    case Term::ce_forward: return "ce_forward";
    case Term::rev_q: return "rev_q";
    case Term::rev_v: return "rev_v";
    case Term::sfr_q_ce: return "sfr_q_ce";
    case Term::sfr_v_ce: return "sfr_v_ce";
    case Term::consistency_q: return "consistency_q";
    case Term::consistency_v: return "consistency_v";
  }
  return "?";
}

std::span<const Term> all_terms() { return kTerms; }

bool term_active(AblationMode mode, Term term) {
  const bool sfr_term = term == Term::sfr_q_ce || term == Term::sfr_v_ce || term == Term::consistency_q ||
                        term == Term::consistency_v;
  switch (mode) {
    case AblationMode::baseline: return term == Term::ce_forward;
    case AblationMode::rev_q: return term == Term::ce_forward || term == Term::rev_q;
    case AblationMode::rev_v: return term == Term::ce_forward || term == Term::rev_v;
    case AblationMode::rev_both: return term == Term::ce_forward || term == Term::rev_q || term == Term::rev_v;
    case AblationMode::sfr: return term == Term::ce_forward || sfr_term;
    case AblationMode::full: return true;
  }
  return false;
}

LossWeights LossWeights::for_mode(AblationMode mode) {
  LossWeights w;
  for (auto t : kTerms) w[t] = term_active(mode, t) ? 1.0 : 0.0;
  return w;
}

void LossWeights::validate(AblationMode mode) const {
  for (auto t : kTerms) {
    const double w = (*this)[t];
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument(std::string("loss.weights.") + to_string(t) + " must be finite and >= 0");
    }
    if (w > 0.0 && !term_active(mode, t)) {
      throw std::invalid_argument(std::string("loss.weights.") + to_string(t) + " is positive but mode " +
                                  to_string(mode) + " excludes that term");
    }
  }
  if (!((*this)[Term::ce_forward] > 0.0)) throw std::invalid_argument("loss.weights.ce_forward must be > 0");
}

double ce_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::out_of_range("ce_loss: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(logits.size()) + ")");
  }
  return log_sum_exp(logits) - logits[label];
}

double rev_feature_loss(std::span<const double> inferred, std::span<const double> target, Reduction reduction) {
  if (inferred.size() != target.size() || inferred.empty()) {
    throw std::invalid_argument("rev_feature_loss: length mismatch " + std::to_string(inferred.size()) + " vs " +
                                std::to_string(target.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < inferred.size(); ++i) {
    const double diff = inferred[i] - target[i];
    s += diff * diff;
  }
  return reduction == Reduction::mean ? s / static_cast<double>(inferred.size()) : s;
}

SfrLoss sfr_losses(std::span<const double> sfr_logits, std::span<const double> a_pre, std::size_t label) {
  if (a_pre.size() != sfr_logits.size()) throw std::invalid_argument("sfr_losses: distribution length mismatch");
  double mass = 0.0;
  for (double p : a_pre) {
    if (p < -1e-6) throw std::invalid_argument("sfr_losses: negative probability");
    mass += p;
  }
  if (std::abs(mass - 1.0) > 1e-6) throw std::invalid_argument("sfr_losses: a_pre is not a distribution");
  SfrLoss out;
  out.ce = ce_loss(sfr_logits, label);
  const double lse = log_sum_exp(sfr_logits);
  for (std::size_t c = 0; c < a_pre.size(); ++c) out.consistency -= a_pre[c] * (sfr_logits[c] - lse);
  return out;
}

Var ce_batch(Tape& tape, Var logits, std::span<const std::size_t> labels) {
  const Tensor& l = tape.value(logits);
  if (labels.size() != l.rows()) throw std::invalid_argument("ce_batch: label count does not match batch");
  Tensor one_hot = Tensor::matrix(l.rows(), l.cols());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= l.cols()) throw std::out_of_range("ce_batch: label out of range");
    one_hot(r, labels[r]) = 1.0;
  }
  return soft_ce_batch(tape, logits, tape.constant(std::move(one_hot)));
}

Var soft_ce_batch(Tape& tape, Var logits, Var target_probs) {
  const Tensor& l = tape.value(logits);
  if (tape.value(target_probs).shape() != l.shape()) throw std::invalid_argument("soft_ce_batch: target shape mismatch");
  const Var picked = tape.mul(tape.log_softmax_rows(logits), target_probs);
  return tape.scale(tape.sum(picked), -1.0 / static_cast<double>(l.rows()));
}

Var feature_mse_batch(Tape& tape, Var inferred, Var target) {
  const Tensor& x = tape.value(inferred);
  if (x.shape() != tape.value(target).shape()) {
    throw std::invalid_argument("feature_mse_batch: shape mismatch " + nd::shape_str(x.shape()) + " vs " +
                                nd::shape_str(tape.value(target).shape()));
  }
  const Var diff = tape.sub(inferred, target);
  return tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / static_cast<double>(x.size()));
}

Var LossTerms::objective(Tape& tape) const { return diag.valid() ? tape.add(total, diag) : total; }

LossTerms total_loss(Tape& tape, const model::PassOutput& pass, const BatchLabels& labels,
                     const LossWeights& weights, AblationMode mode) {
  weights.validate(mode);
  const std::size_t k = pass.forward.size();
  if (labels.answers.size() != k) throw std::invalid_argument("total_loss: label attribute count mismatch");
  const bool needs_reverse = std::any_of(kTerms.begin() + 1, kTerms.end(), [&](Term t) { return weights[t] > 0.0; });
  if (needs_reverse && pass.reverse.size() != k) {
    throw std::invalid_argument("total_loss: reverse outputs missing for mode " + std::string(to_string(mode)));
  }

  LossTerms out;
  std::array<Var, kTermCount> per_term{};
  const auto add_to = [&](Term t, Var v) {
    auto& slot = per_term[static_cast<std::size_t>(t)];
    slot = slot.valid() ? tape.add(slot, v) : v;
  };

  for (std::size_t i = 0; i < k; ++i) {
    const auto& f = pass.forward[i];
    add_to(Term::ce_forward, ce_batch(tape, f.logits, labels.answers[i]));
    if (!needs_reverse) continue;
    const auto& r = pass.reverse[i];
    if (weights[Term::rev_q] > 0.0) add_to(Term::rev_q, feature_mse_batch(tape, r.q_hat, r.q_target));
    if (weights[Term::rev_v] > 0.0) add_to(Term::rev_v, feature_mse_batch(tape, r.v_hat, r.v_target));
    if (weights[Term::sfr_q_ce] > 0.0) add_to(Term::sfr_q_ce, ce_batch(tape, r.sfr_q_logits, labels.answers[i]));
    if (weights[Term::sfr_v_ce] > 0.0) add_to(Term::sfr_v_ce, ce_batch(tape, r.sfr_v_logits, labels.answers[i]));
    if (weights[Term::consistency_q] > 0.0 || weights[Term::consistency_v] > 0.0) {
      const Var a_pre = tape.stop_gradient(f.probs);
      if (weights[Term::consistency_q] > 0.0) add_to(Term::consistency_q, soft_ce_batch(tape, r.sfr_q_logits, a_pre));
      if (weights[Term::consistency_v] > 0.0) add_to(Term::consistency_v, soft_ce_batch(tape, r.sfr_v_logits, a_pre));
    }
  }

  double total = 0.0;
  for (auto t : kTerms) {
    const auto idx = static_cast<std::size_t>(t);
    const Var v = per_term[idx];
    if (!v.valid()) continue;
    const double w = weights[t];
    out.breakdown.terms[idx] = tape.value(v).item();
    total += w * out.breakdown.terms[idx];
    const Var weighted = w == 1.0 ? v : tape.scale(v, w);
    out.total = out.total.valid() ? tape.add(out.total, weighted) : weighted;
  }
  out.breakdown.total = total;

  if (pass.diag_logits.valid()) {
    const Tensor& logits = tape.value(pass.diag_logits);
    if (labels.diagnosis.size() != logits.rows()) throw std::invalid_argument("total_loss: diagnosis label count");
    Tensor mask = Tensor::matrix(logits.rows(), logits.cols());
    std::size_t labeled = 0;
    for (std::size_t r = 0; r < labels.diagnosis.size(); ++r) {
      const int y = labels.diagnosis[r];
      if (y < 0) continue;
      if (y > 1) throw std::out_of_range("total_loss: diagnosis label must be 0 or 1");
      mask(r, static_cast<std::size_t>(y)) = 1.0;
      ++labeled;
    }
    if (labeled > 0) {
      const Var picked = tape.mul(tape.log_softmax_rows(pass.diag_logits), tape.constant(mask));
      out.diag = tape.scale(tape.sum(picked), -1.0 / static_cast<double>(labeled));
      out.breakdown.diag_ce = tape.value(out.diag).item();
    }
  }
  return out;
}

}  // namespace trivqa::loss
