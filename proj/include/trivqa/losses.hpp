#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trivqa/model.hpp"

namespace trivqa::loss {

using nd::Tape;
using nd::Tensor;
using nd::Var;

/// Which objective terms a training run optimizes.
///   baseline  forward CE only
///   rev_q     + answer/image -> question reconstruction
///   rev_v     + answer/question -> image reconstruction
///   rev_both  + both reconstructions
///   sfr       + second-forward CE and consistency terms (no reconstruction)
///   full      everything
enum class AblationMode { baseline, rev_q, rev_v, rev_both, sfr, full };

const char* to_string(AblationMode mode);
AblationMode parse_ablation_mode(const std::string& text);
std::span<const AblationMode> all_modes();

enum class Term { ce_forward, rev_q, rev_v, sfr_q_ce, sfr_v_ce, consistency_q, consistency_v };
inline constexpr std::size_t kTermCount = 7;

const char* to_string(Term term);
std::span<const Term> all_terms();
bool term_active(AblationMode mode, Term term);

struct LossWeights {
  std::array<double, kTermCount> values{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

  double& operator[](Term t) { return values[static_cast<std::size_t>(t)]; }
  double operator[](Term t) const { return values[static_cast<std::size_t>(t)]; }

  /// Unit weights on the terms `mode` enables, zero elsewhere.
  static LossWeights for_mode(AblationMode mode);
  /// Nonnegative, finite, ce_forward > 0, and no weight on a term the mode excludes.
  void validate(AblationMode mode) const;

  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  std::array<double, kTermCount> terms{};
  double total = 0.0;
  /// Diagnosis readout CE. Optimized alongside but outside `total`: its graph
  /// only reaches the diagnosis head.
  double diag_ce = 0.0;

  double operator[](Term t) const { return terms[static_cast<std::size_t>(t)]; }
};

enum class Reduction { mean, sum };

// Scalar reference forms on plain vectors.
double ce_loss(std::span<const double> logits, std::size_t label);
double rev_feature_loss(std::span<const double> inferred, std::span<const double> target,
                        Reduction reduction = Reduction::mean);

struct SfrLoss {
  double ce = 0.0;
  double consistency = 0.0;
};
/// Hard CE of the second-pass logits against the label, plus soft CE against
/// the (fixed) first-pass answer distribution.
SfrLoss sfr_losses(std::span<const double> sfr_logits, std::span<const double> a_pre, std::size_t label);

// Batched graph forms; each averages over rows.
Var ce_batch(Tape& tape, Var logits, std::span<const std::size_t> labels);
/// `target_probs` should not require gradients (a constant or stop_gradient).
Var soft_ce_batch(Tape& tape, Var logits, Var target_probs);
/// Mean over rows of the per-row mean squared difference.
Var feature_mse_batch(Tape& tape, Var inferred, Var target);

struct BatchLabels {
  std::vector<std::vector<std::size_t>> answers;  // [K][B]
  std::vector<int> diagnosis;                      // [B], -1 when unlabeled
};

struct LossTerms {
  Var total;
  Var diag;  // invalid when no row carries a diagnosis label
  LossBreakdown breakdown;

  /// The scalar actually differentiated during training.
  Var objective(Tape& tape) const;
};

/// Sums each enabled term over attributes and averages over the batch.
LossTerms total_loss(Tape& tape, const model::PassOutput& pass, const BatchLabels& labels,
                     const LossWeights& weights, AblationMode mode);

}  // namespace trivqa::loss
