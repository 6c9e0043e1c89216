#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "trivqa/losses.hpp"

namespace {

using namespace trivqa;
using namespace trivqa::loss;
using trivqa::testing::random_matrix;

/// Direct log-of-softmax reference without the max shift.
double naive_ce(std::span<const double> logits, std::size_t label) {
  double z = 0.0;
  for (double v : logits) z += std::exp(v);
  return -std::log(std::exp(logits[label]) / z);
}

std::vector<double> softmax(std::span<const double> logits) {
  double z = 0.0;
  for (double v : logits) z += std::exp(v);
  std::vector<double> p;
  for (double v : logits) p.push_back(std::exp(v) / z);
  return p;
}

TEST(CrossEntropy, UniformLogitsGiveLogOfCardinality) {
  const double logits[] = {0.0, 0.0, 0.0};
  EXPECT_NEAR(ce_loss(logits, 1), std::log(3.0), 1e-15);
}

TEST(CrossEntropy, SaturatedLogitsStayFinite) {
  const double right[] = {1000.0, 0.0, 0.0};
  const double wrong[] = {0.0, 1000.0, 0.0};
  EXPECT_NEAR(ce_loss(right, 0), 0.0, 1e-12);
  EXPECT_NEAR(ce_loss(wrong, 0), 1000.0, 1e-9);
  EXPECT_THROW(ce_loss(right, 3), std::out_of_range);
}

TEST(CrossEntropy, AgreesWithNaiveFormulaOnRandomInstances) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng() % 5;
    const auto logits = random_matrix(rng, 1, c);
    const std::size_t label = rng() % c;
    EXPECT_NEAR(ce_loss(logits.data(), label), naive_ce(logits.data(), label), 1e-10);
  }
}

TEST(CrossEntropy, BatchFormAveragesScalarForm) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor logits = random_matrix(rng, 5, 3);
    std::vector<std::size_t> labels(5);
    double want = 0.0;
    for (std::size_t r = 0; r < 5; ++r) {
      labels[r] = rng() % 3;
      want += ce_loss(logits.row_view(r), labels[r]) / 5.0;
    }
    Tape tape;
    EXPECT_NEAR(tape.value(ce_batch(tape, tape.constant(logits), labels)).item(), want, 1e-10);
  }
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHotOverBatch) {
  std::mt19937_64 rng(3);
  const Tensor logits = random_matrix(rng, 4, 3);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  Tape tape;
  const Var x = tape.variable(logits);
  const auto grads = tape.backward(ce_batch(tape, x, labels));
  for (std::size_t r = 0; r < 4; ++r) {
    const auto p = softmax(logits.row_view(r));
    for (std::size_t c = 0; c < 3; ++c) {
      const double want = (p[c] - (c == labels[r] ? 1.0 : 0.0)) / 4.0;
      EXPECT_NEAR((*grads.of(x))(r, c), want, 1e-12);
    }
  }
}

TEST(FeatureLoss, UnitOffsetGivesOne) {
  const std::vector<double> x{1, 2, 3, 4}, t{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(rev_feature_loss(x, t), 1.0);
  EXPECT_DOUBLE_EQ(rev_feature_loss(x, t, Reduction::sum), 4.0);
  EXPECT_THROW(rev_feature_loss(x, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(FeatureLoss, BatchFormMatchesScalarFormAndGradient) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor a = random_matrix(rng, 3, 6);
    const Tensor b = random_matrix(rng, 3, 6);
    double want = 0.0;
    for (std::size_t r = 0; r < 3; ++r) want += rev_feature_loss(a.row_view(r), b.row_view(r)) / 3.0;
    Tape tape;
    const Var x = tape.variable(a);
    const Var loss = feature_mse_batch(tape, x, tape.constant(b));
    EXPECT_NEAR(tape.value(loss).item(), want, 1e-10);
    const auto grads = tape.backward(loss);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR((*grads.of(x))[i], 2.0 * (a[i] - b[i]) / 18.0, 1e-12);
  }
}

TEST(SecondForward, MatchesWorkedExamples) {
  const double logits[] = {0.0, 0.0, 0.0};
  const double a_pre[] = {0.2, 0.3, 0.5};
  const auto l = sfr_losses(logits, a_pre, 2);
  EXPECT_NEAR(l.ce, std::log(3.0), 1e-15);
  EXPECT_NEAR(l.consistency, std::log(3.0), 1e-15);

  const double peaked[] = {std::log(0.2), std::log(0.3), std::log(0.5)};
  const auto m = sfr_losses(peaked, a_pre, 0);
  EXPECT_NEAR(m.ce, -std::log(0.2), 1e-12);
  const double entropy = -(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5));
  EXPECT_NEAR(m.consistency, entropy, 1e-12);
}

TEST(SecondForward, ConsistencyIsMinimizedWhenDistributionsAgree) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = softmax(random_matrix(rng, 1, 4).data());
    const auto other = random_matrix(rng, 1, 4);
    std::vector<double> log_p;
    for (double x : p) log_p.push_back(std::log(x));
    const double at_p = sfr_losses(log_p, p, 0).consistency;
    EXPECT_LE(at_p, sfr_losses(other.data(), p, 0).consistency + 1e-12);
  }
}

TEST(SecondForward, RejectsTargetsOffTheSimplex) {
  const double logits[] = {0.0, 0.0};
  const double bad[] = {0.7, 0.7};
  EXPECT_THROW(sfr_losses(logits, bad, 0), std::invalid_argument);
}

TEST(SecondForward, SoftBatchFormMatchesScalarForm) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor logits = random_matrix(rng, 4, 3);
    const Tensor target = nd::softmax_rows(random_matrix(rng, 4, 3));
    double want = 0.0;
    for (std::size_t r = 0; r < 4; ++r) want += sfr_losses(logits.row_view(r), target.row_view(r), 0).consistency / 4;
    Tape tape;
    const Var v = soft_ce_batch(tape, tape.constant(logits), tape.constant(target));
    EXPECT_NEAR(tape.value(v).item(), want, 1e-10);
  }
}

struct Fixture {
  AttributeSchema schema{{{"A", 3}, {"B", 2}}};
  model::ModelConfig cfg;
  model::BatchInput batch;
  BatchLabels labels;

  Fixture() {
    cfg.d_v = 6;
    cfg.d_q = 5;
    cfg.d = 8;
    std::mt19937_64 rng(7);
    batch.v_raw = random_matrix(rng, 4, cfg.d_v);
    for (int i = 0; i < 2; ++i) batch.q_raw.push_back(random_matrix(rng, 4, cfg.d_q));
    labels.answers = {{0, 1, 2, 0}, {1, 0, 1, 1}};
    labels.diagnosis = {1, 0, -1, 1};
  }
};

TEST(TotalLoss, EqualsWeightedSumOfTermsAndIsLinearInWeights) {
  Fixture f;
  const model::TriVqaModel m(f.schema, f.cfg, 3);
  LossWeights w;
  std::mt19937_64 rng(8);
  for (auto& x : w.values) x = 0.1 + static_cast<double>(rng() % 100) / 50.0;
  Tape tape;
  const auto pass = m.run(tape, f.batch);
  const auto terms = total_loss(tape, pass, f.labels, w, AblationMode::full);
  double want = 0.0;
  for (auto t : all_terms()) want += w[t] * terms.breakdown[t];
  EXPECT_NEAR(terms.breakdown.total, want, 1e-12);
  EXPECT_NEAR(tape.value(terms.total).item(), want, 1e-12);
  EXPECT_GT(terms.breakdown.diag_ce, 0.0);
  EXPECT_NEAR(tape.value(terms.objective(tape)).item(), want + terms.breakdown.diag_ce, 1e-12);

  LossWeights doubled = w;
  for (auto& x : doubled.values) x *= 2.0;
  Tape tape2;
  const auto terms2 = total_loss(tape2, m.run(tape2, f.batch), f.labels, doubled, AblationMode::full);
  EXPECT_NEAR(terms2.breakdown.total, 2.0 * terms.breakdown.total, 1e-12);
}

TEST(TotalLoss, TermsMatchPerAttributeReferences) {
  Fixture f;
  const model::TriVqaModel m(f.schema, f.cfg, 4);
  Tape tape;
  const auto pass = m.run(tape, f.batch);
  const auto terms = total_loss(tape, pass, f.labels, LossWeights{}, AblationMode::full);
  double ce = 0.0, rev_q = 0.0, cons_v = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const Tensor& logits = tape.value(pass.forward[i].logits);
    const Tensor& probs = tape.value(pass.forward[i].probs);
    for (std::size_t r = 0; r < 4; ++r) {
      ce += ce_loss(logits.row_view(r), f.labels.answers[i][r]) / 4.0;
      rev_q += rev_feature_loss(tape.value(pass.reverse[i].q_hat).row_view(r),
                                tape.value(pass.reverse[i].q_target).row_view(r)) / 4.0;
      cons_v += sfr_losses(tape.value(pass.reverse[i].sfr_v_logits).row_view(r), probs.row_view(r),
                           f.labels.answers[i][r]).consistency / 4.0;
    }
  }
  EXPECT_NEAR(terms.breakdown[Term::ce_forward], ce, 1e-10);
  EXPECT_NEAR(terms.breakdown[Term::rev_q], rev_q, 1e-10);
  EXPECT_NEAR(terms.breakdown[Term::consistency_v], cons_v, 1e-10);
}

TEST(TotalLoss, BaselineRecordsOnlyForwardCrossEntropy) {
  Fixture f;
  const model::TriVqaModel m(f.schema, f.cfg, 5);
  Tape tape;
  const auto terms = total_loss(tape, m.run(tape, f.batch), f.labels, LossWeights::for_mode(AblationMode::baseline),
                                AblationMode::baseline);
  for (auto t : all_terms()) {
    if (t == Term::ce_forward) {
      EXPECT_GT(terms.breakdown[t], 0.0);
    } else {
      EXPECT_EQ(terms.breakdown[t], 0.0);
    }
  }
}

TEST(LossWeights, ValidationRejectsExcludedOrInvalidWeights) {
  EXPECT_THROW(LossWeights{}.validate(AblationMode::baseline), std::invalid_argument);
  LossWeights w = LossWeights::for_mode(AblationMode::rev_q);
  EXPECT_NO_THROW(w.validate(AblationMode::rev_q));
  w[Term::rev_q] = -1.0;
  EXPECT_THROW(w.validate(AblationMode::rev_q), std::invalid_argument);
  w = LossWeights::for_mode(AblationMode::full);
  w[Term::ce_forward] = 0.0;
  EXPECT_THROW(w.validate(AblationMode::full), std::invalid_argument);
  w[Term::ce_forward] = std::nan("");
  EXPECT_THROW(w.validate(AblationMode::full), std::invalid_argument);
}

TEST(AblationModes, ActiveTermsNestAsDocumented) {
  for (auto mode : all_modes()) {
    EXPECT_TRUE(term_active(mode, Term::ce_forward));
    for (auto t : all_terms()) {
      if (term_active(mode, t)) {
        EXPECT_TRUE(term_active(AblationMode::full, t));
      }
    }
    EXPECT_EQ(parse_ablation_mode(to_string(mode)), mode);
  }
  EXPECT_FALSE(term_active(AblationMode::sfr, Term::rev_q));
  EXPECT_TRUE(term_active(AblationMode::rev_both, Term::rev_v));
  EXPECT_THROW(parse_ablation_mode("everything"), std::invalid_argument);
}

}  // namespace
