#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "trivqa/losses.hpp"
#include "trivqa/model.hpp"

namespace {

using namespace trivqa;
using namespace trivqa::model;
using trivqa::testing::random_matrix;

AttributeSchema mixed_schema() {
  return AttributeSchema{{{"A", 3}, {"B", 3}, {"C", 2}, {"D", 2}, {"E", 2}, {"F", 2}}};
}

ModelConfig small_config(FusionMode fusion = FusionMode::add) {
  ModelConfig cfg;
  cfg.d_v = 7;
  cfg.d_q = 5;
  cfg.d = 6;
  cfg.fusion = fusion;
  return cfg;
}

BatchInput random_batch(std::mt19937_64& rng, const ModelConfig& cfg, std::size_t k, std::size_t b) {
  BatchInput in;
  in.v_raw = random_matrix(rng, b, cfg.d_v);
  for (std::size_t i = 0; i < k; ++i) in.q_raw.push_back(random_matrix(rng, b, cfg.d_q));
  return in;
}

loss::BatchLabels random_labels(std::mt19937_64& rng, const AttributeSchema& schema, std::size_t b) {
  loss::BatchLabels labels;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    std::vector<std::size_t> a(b);
    for (auto& x : a) x = rng() % schema[i].cardinality;
    labels.answers.push_back(a);
  }
  labels.diagnosis.assign(b, -1);
  return labels;
}

std::size_t expected_param_count(const AttributeSchema& schema, const ModelConfig& c) {
  const std::size_t d = c.d;
  const auto lin = [](std::size_t in, std::size_t out) { return in * out + out; };
  const auto mlp = [&](std::size_t in, std::size_t hidden, std::size_t out) {
    std::size_t n = 0, w = in;
    for (std::size_t i = 0; i < hidden; ++i) {
      n += lin(w, d);
      w = d;
    }
    return n + lin(w, out);
  };
  std::size_t n = lin(c.d_v, d) + lin(c.d_q, d);
  if (c.fusion == FusionMode::concat) n += 3 * lin(2 * d, d);
  for (const auto& a : schema.attributes) n += mlp(d, c.forward_hidden_layers, a.cardinality) + a.cardinality * d;
  n += 2 * mlp(d, c.reverse_hidden_layers, d);
  n += mlp(schema.size() * d, c.diag_hidden_layers, 2);
  return n;
}

TEST(Model, OutputShapesFollowMixedCardinalities) {
  const auto schema = mixed_schema();
  const auto cfg = small_config();
  const TriVqaModel m(schema, cfg, 1);
  std::mt19937_64 rng(1);
  Tape tape;
  const auto out = m.run(tape, random_batch(rng, cfg, schema.size(), 4));
  ASSERT_EQ(out.forward.size(), 6u);
  ASSERT_EQ(out.reverse.size(), 6u);
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const nd::Shape want{4, schema[i].cardinality};
    EXPECT_EQ(tape.value(out.forward[i].logits).shape(), want);
    EXPECT_EQ(tape.value(out.reverse[i].sfr_q_logits).shape(), want);
    EXPECT_EQ(tape.value(out.reverse[i].sfr_v_logits).shape(), want);
    EXPECT_EQ(tape.value(out.reverse[i].q_hat).shape(), (nd::Shape{4, cfg.d}));
    EXPECT_EQ(tape.value(out.reverse[i].v_hat).shape(), (nd::Shape{4, cfg.d}));
  }
  EXPECT_EQ(tape.value(out.diag_logits).shape(), (nd::Shape{4, 2}));
}

TEST(Model, ParameterCountDependsOnlyOnConfig) {
  const auto schema = mixed_schema();
  for (auto fusion : {FusionMode::add, FusionMode::concat}) {
    auto cfg = small_config(fusion);
    cfg.forward_hidden_layers = 2;
    cfg.diag_hidden_layers = 0;
    const TriVqaModel a(schema, cfg, 1);
    const TriVqaModel b(schema, cfg, 99);
    EXPECT_EQ(a.params().parameter_count(), b.params().parameter_count());
    EXPECT_EQ(a.params().parameter_count(), expected_param_count(schema, cfg));
    EXPECT_FALSE(a.params() == b.params());
  }
}

TEST(Model, ZeroFinalLayerGivesUniformAnswers) {
  const auto schema = mixed_schema();
  const auto cfg = small_config();
  TriVqaModel m(schema, cfg, 3);
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& last = m.forward_head_mlp(i).layers.back();
    for (double& x : m.params().value(last.weight).data()) x = 0.0;
  }
  std::mt19937_64 rng(3);
  Tape tape;
  const auto out = m.run(tape, random_batch(rng, cfg, schema.size(), 5), {.reverse = false, .diagnosis = false});
  for (std::size_t i = 0; i < schema.size(); ++i) {
    for (double p : tape.value(out.forward[i].probs).data()) {
      EXPECT_NEAR(p, 1.0 / static_cast<double>(schema[i].cardinality), 1e-15);
    }
  }
}

TEST(Model, AnswerEmbeddingOfOneHotIsTheRowAndOfMidpointIsTheMean) {
  const AttributeSchema schema{{{"A", 2}}};
  const auto cfg = small_config();
  const TriVqaModel m(schema, cfg, 5);
  const Tensor& table = m.params().value(m.answer_embedding_param(0));
  Tape tape;
  const Var e = m.embed_answer(tape, tape.constant(Tensor::matrix({{0, 1}, {0.5, 0.5}})), 0, false);
  for (std::size_t c = 0; c < cfg.d; ++c) {
    EXPECT_EQ(tape.value(e)(0, c), table(1, c));
    EXPECT_NEAR(tape.value(e)(1, c), 0.5 * (table(0, c) + table(1, c)), 1e-15);
  }
  EXPECT_THROW(m.embed_answer(tape, tape.constant(Tensor::matrix({{0.7, 0.7}})), 0, false), std::invalid_argument);
}

TEST(Model, ReverseStopGradientLeavesForwardHeadsUntouched) {
  const AttributeSchema schema{{{"A", 3}, {"B", 2}}};
  auto cfg = small_config();
  cfg.reverse_stop_gradient = true;
  const TriVqaModel m(schema, cfg, 7);
  std::mt19937_64 rng(7);
  Tape tape;
  const auto out = m.run(tape, random_batch(rng, cfg, 2, 4), {.diagnosis = false});
  Var rev = loss::feature_mse_batch(tape, out.reverse[0].q_hat, out.reverse[0].q_target);
  rev = tape.add(rev, loss::feature_mse_batch(tape, out.reverse[1].v_hat, out.reverse[1].v_target));
  const auto grads = tape.backward(rev).collect(m.params());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    for (const auto& l : m.forward_head_mlp(i).layers) {
      EXPECT_FALSE(grads.reached[l.weight]);
      EXPECT_FALSE(grads.reached[l.bias]);
    }
  }
  EXPECT_TRUE(grads.reached[m.g_head().layers[0].weight]);
}

TEST(Model, BaselineObjectiveDoesNotReachReverseHeads) {
  const auto schema = mixed_schema();
  const auto cfg = small_config();
  const TriVqaModel m(schema, cfg, 9);
  std::mt19937_64 rng(9);
  Tape tape;
  const auto out = m.run(tape, random_batch(rng, cfg, schema.size(), 4), {.diagnosis = false});
  const auto terms = loss::total_loss(tape, out, random_labels(rng, schema, 4),
                                      loss::LossWeights::for_mode(loss::AblationMode::baseline),
                                      loss::AblationMode::baseline);
  const auto grads = tape.backward(terms.objective(tape)).collect(m.params());
  for (const Mlp* head : {&m.g_head(), &m.h_head()}) {
    for (const auto& l : head->layers) {
      EXPECT_FALSE(grads.reached[l.weight]);
      for (double g : grads.values[l.weight].data()) EXPECT_EQ(g, 0.0);
    }
  }
  EXPECT_TRUE(grads.reached[m.proj_v().weight]);
}

TEST(Model, SecondPassOnTrueFeaturesReproducesForwardLogits) {
  for (auto fusion : {FusionMode::add, FusionMode::concat}) {
    const AttributeSchema schema{{{"A", 3}, {"B", 2}}};
    const auto cfg = small_config(fusion);
    const TriVqaModel m(schema, cfg, 11);
    std::mt19937_64 rng(11);
    Tape tape;
    const auto out = m.run(tape, random_batch(rng, cfg, 2, 3), {.reverse = false, .diagnosis = false});
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(tape.value(m.sfr_q(tape, out.q_proj[i], out.v_proj, i)), tape.value(out.forward[i].logits));
      EXPECT_EQ(tape.value(m.sfr_v(tape, out.q_proj[i], out.v_proj, i)), tape.value(out.forward[i].logits));
    }
  }
}

TEST(Model, IdentityReverseHeadOnZeroInputReturnsItsBias) {
  const AttributeSchema schema{{{"A", 2}}};
  auto cfg = small_config();
  cfg.reverse_hidden_layers = 0;
  TriVqaModel m(schema, cfg, 13);
  const auto& layer = m.g_head().layers.at(0);
  Tensor& w = m.params().value(layer.weight);
  for (std::size_t r = 0; r < cfg.d; ++r) {
    for (std::size_t c = 0; c < cfg.d; ++c) w(r, c) = r == c ? 1.0 : 0.0;
  }
  Tensor& b = m.params().value(layer.bias);
  for (std::size_t c = 0; c < cfg.d; ++c) b[c] = 0.25 * static_cast<double>(c) - 0.5;
  Tape tape;
  const Var zero = tape.constant(Tensor::matrix(2, cfg.d));
  const Tensor out = tape.value(m.reverse_g(tape, zero, zero));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < cfg.d; ++c) EXPECT_EQ(out(r, c), b[c]);
  }
}

TEST(Model, DiagnosisRequiresEveryAttributeFeature) {
  const auto schema = mixed_schema();
  const auto cfg = small_config();
  const TriVqaModel m(schema, cfg, 15);
  Tape tape;
  std::vector<Var> fused(schema.size(), tape.constant(Tensor::matrix(2, cfg.d)));
  EXPECT_EQ(tape.value(m.diagnose(tape, fused)).shape(), (nd::Shape{2, 2}));
  fused.pop_back();
  EXPECT_THROW(m.diagnose(tape, fused), std::invalid_argument);
}

TEST(Model, ConcatFusionOwnsOneMapPerSite) {
  const AttributeSchema schema{{{"A", 3}}};
  const TriVqaModel add(schema, small_config(FusionMode::add), 17);
  const TriVqaModel cat(schema, small_config(FusionMode::concat), 17);
  for (const char* site : {"fuse.forward.weight", "fuse.reverse_q.weight", "fuse.reverse_v.weight"}) {
    EXPECT_FALSE(add.params().find(site).has_value());
    ASSERT_TRUE(cat.params().find(site).has_value());
    EXPECT_EQ(cat.params().value(*cat.params().find(site)).shape(), (nd::Shape{12, 6}));
  }
}

TEST(Model, AdoptingParametersChecksLayout) {
  const auto schema = mixed_schema();
  const auto cfg = small_config();
  const TriVqaModel m(schema, cfg, 19);
  const TriVqaModel copy(schema, cfg, m.params());
  EXPECT_TRUE(copy.params() == m.params());
  EXPECT_THROW(TriVqaModel(schema, small_config(FusionMode::concat), m.params()), std::invalid_argument);
}

TEST(Model, InputWidthMismatchIsRejected) {
  const auto schema = mixed_schema();
  const auto cfg = small_config();
  const TriVqaModel m(schema, cfg, 21);
  std::mt19937_64 rng(21);
  auto batch = random_batch(rng, cfg, schema.size(), 2);
  batch.v_raw = Tensor::matrix(2, cfg.d_v + 1);
  Tape tape;
  EXPECT_THROW(m.run(tape, batch), std::invalid_argument);
}

}  // namespace
