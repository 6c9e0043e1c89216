#include "trivqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "trivqa/optimizer.hpp"

namespace trivqa::cli {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t { kSynthStream = 0, kSplitStream = 1, kInitStream = 2, kBatchStream = 3 };

std::size_t argmax_row(const nd::Tensor& t, std::size_t r) {
  auto row = t.row_view(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CurveAccumulator {
  double q_mse = 0.0, q_euc = 0.0, v_mse = 0.0, v_euc = 0.0;
  std::size_t count = 0;

  void add(const nd::Tape& tape, const model::ReverseSlice& r) {
    const nd::Tensor& qh = tape.value(r.q_hat);
    const nd::Tensor& qt = tape.value(r.q_target);
    const nd::Tensor& vh = tape.value(r.v_hat);
    const nd::Tensor& vt = tape.value(r.v_target);
    for (std::size_t row = 0; row < qh.rows(); ++row) {
      const auto dq = metrics::reliability_measure(qh.row_view(row), qt.row_view(row));
      const auto dv = metrics::reliability_measure(vh.row_view(row), vt.row_view(row));
      q_mse += dq.mse;
      q_euc += dq.euclidean;
      v_mse += dv.mse;
      v_euc += dv.euclidean;
      ++count;
    }
  }

  metrics::CurveRow row(int epoch) const {
    const double n = static_cast<double>(std::max<std::size_t>(count, 1));
    return {epoch, q_mse / n, q_euc / n, v_mse / n, v_euc / n};
  }
};

}  // namespace

TrainingDiverged::TrainingDiverged(int epoch, int last_finite_epoch, const std::string& detail)
    : std::runtime_error("training diverged in epoch " + std::to_string(epoch) + " (last finite epoch " +
                         std::to_string(last_finite_epoch) + "): " + detail),
      epoch_(epoch),
      last_finite_(last_finite_epoch) {}

data::Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset.source == DatasetSource::synth) return data::synth_generate(cfg.synth_config());
  return data::load_features(cfg.dataset.manifest);
}

PreparedData prepare_data(const RunConfig& cfg, const data::Dataset& raw) {
  data::Split parts = data::split(raw, cfg.training.test_fraction, derive_seed(cfg.seed, kSplitStream));
  PreparedData out;
  if (cfg.training.normalize) {
    out.stats = data::fit_normalizer(parts.train);
    out.train = data::normalize(parts.train, *out.stats);
    out.test = data::normalize(parts.test, *out.stats);
  } else {
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
  }
  return out;
}

PreparedData prepare_data(const RunConfig& cfg, const data::Dataset& raw,
                          const std::optional<data::FeatureStats>& stats) {
  data::Split parts = data::split(raw, cfg.training.test_fraction, derive_seed(cfg.seed, kSplitStream));
  PreparedData out;
  out.stats = stats;
  if (stats) {
    out.train = data::normalize(parts.train, *stats);
    out.test = data::normalize(parts.test, *stats);
  } else {
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
  }
  return out;
}

model::BatchInput make_batch(const data::Dataset& ds, std::span<const std::size_t> rows) {
  const std::size_t k = ds.schema.size();
  model::BatchInput batch;
  batch.v_raw = nd::Tensor::matrix(rows.size(), ds.d_v);
  batch.q_raw.assign(k, nd::Tensor::matrix(rows.size(), ds.d_q));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const data::Sample& s = ds.samples.at(rows[r]);
    std::copy(s.v_raw.begin(), s.v_raw.end(), batch.v_raw.row_view(r).begin());
    for (std::size_t i = 0; i < k; ++i) {
      std::copy(s.q_raw[i].begin(), s.q_raw[i].end(), batch.q_raw[i].row_view(r).begin());
    }
  }
  return batch;
}

loss::BatchLabels make_labels(const data::Dataset& ds, std::span<const std::size_t> rows) {
  loss::BatchLabels labels;
  labels.answers.assign(ds.schema.size(), std::vector<std::size_t>(rows.size()));
  labels.diagnosis.assign(rows.size(), -1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const data::Sample& s = ds.samples.at(rows[r]);
    for (std::size_t i = 0; i < ds.schema.size(); ++i) labels.answers[i][r] = s.answers[i];
    if (s.diagnosis) labels.diagnosis[r] = *s.diagnosis;
  }
  return labels;
}

TrainResult train(const RunConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch) {
  cfg.validate();
  const data::Dataset& train_set = data.train;
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training split");
  TrainResult result{
      model::TriVqaModel(train_set.schema, cfg.model_config(train_set.d_v, train_set.d_q),
                         derive_seed(cfg.seed, kInitStream)),
      {},
      {}};
  model::TriVqaModel& model = result.model;
  nd::SgdMomentum optimizer(cfg.optimizer, model.params());
  std::mt19937_64 rng(derive_seed(cfg.seed, kBatchStream));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = cfg.training.batch_size;

  for (int epoch = 0; epoch < cfg.training.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = nd::learning_rate(cfg.optimizer, epoch);
    CurveAccumulator curve;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(bs, order.size() - start));
      const model::BatchInput batch = make_batch(train_set, rows);
      const loss::BatchLabels labels = make_labels(train_set, rows);

      nd::Tape tape;
      const model::PassOutput pass = model.run(tape, batch, {.reverse = true, .diagnosis = true});
      const loss::LossTerms terms = loss::total_loss(tape, pass, labels, cfg.weights, cfg.mode);
      const nd::Var objective = terms.objective(tape);
      const double value = tape.value(objective).item();
      if (!std::isfinite(value)) throw TrainingDiverged(epoch, epoch - 1, "non-finite loss " + fmt(value));

      for (const auto& r : pass.reverse) curve.add(tape, r);
      const double w = static_cast<double>(rows.size());
      for (std::size_t t = 0; t < loss::kTermCount; ++t) log.losses.terms[t] += w * terms.breakdown.terms[t];
      log.losses.total += w * terms.breakdown.total;
      log.losses.diag_ce += w * terms.breakdown.diag_ce;
      seen += rows.size();

      const nd::ParamGrads grads = tape.backward(objective).collect(model.params());
      const nd::StepResult step = optimizer.step(model.params(), grads, epoch);
      if (!step.applied) throw TrainingDiverged(epoch, epoch - 1, step.diagnostic);
    }

    const double n = static_cast<double>(seen);
    for (auto& t : log.losses.terms) t /= n;
    log.losses.total /= n;
    log.losses.diag_ce /= n;
    log.curve = curve.row(epoch);
    result.curve.append(log.curve);
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

std::string epoch_log_csv(const std::vector<EpochLog>& epochs) {
  std::string out = "epoch,lr";
  for (auto t : loss::all_terms()) out += std::string(",") + loss::to_string(t);
  out += ",total,diag_ce,av_to_q_mse,av_to_q_euclidean,aq_to_v_mse,aq_to_v_euclidean\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + fmt(e.lr);
    for (double t : e.losses.terms) out += "," + fmt(t);
    out += "," + fmt(e.losses.total) + "," + fmt(e.losses.diag_ce);
    out += "," + fmt(e.curve.av_to_q_mse) + "," + fmt(e.curve.av_to_q_euclidean);
    out += "," + fmt(e.curve.aq_to_v_mse) + "," + fmt(e.curve.aq_to_v_euclidean) + "\n";
  }
  return out;
}

Evaluation evaluate(const model::TriVqaModel& model, const data::Dataset& ds, const EvalOptions& options) {
  const std::size_t k = ds.schema.size();
  if (ds.schema.cardinalities() != model.schema().cardinalities()) {
    throw std::invalid_argument("evaluate: dataset schema does not match the model");
  }
  Evaluation out;
  out.predictions.assign(ds.size(), std::vector<std::size_t>(k));
  out.sfr_q_predictions = out.predictions;
  out.sfr_v_predictions = out.predictions;
  out.diagnosis_scores.assign(ds.size(), 0.0);
  out.records.reserve(ds.size() * k * 2);

  const std::size_t bs = std::max<std::size_t>(options.batch_size, 1);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < ds.size(); start += bs) {
    rows.resize(std::min(bs, ds.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    nd::Tape tape;
    const model::PassOutput pass = model.run(tape, make_batch(ds, rows),
                                             {.reverse = true, .diagnosis = true, .hard_answer = options.hard_answer});
    const nd::Tensor diag = nd::softmax_rows(tape.value(pass.diag_logits));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t n = rows[r];
      out.diagnosis_scores[n] = diag(r, 1);
      for (std::size_t i = 0; i < k; ++i) {
        const auto& f = pass.forward[i];
        const auto& rev = pass.reverse[i];
        out.predictions[n][i] = argmax_row(tape.value(f.probs), r);
        out.sfr_q_predictions[n][i] = argmax_row(tape.value(rev.sfr_q_logits), r);
        out.sfr_v_predictions[n][i] = argmax_row(tape.value(rev.sfr_v_logits), r);
        const bool correct = out.predictions[n][i] == ds.samples[n].answers[i];
        const auto dq = metrics::reliability_measure(tape.value(rev.q_hat).row_view(r),
                                                     tape.value(rev.q_target).row_view(r));
        const auto dv = metrics::reliability_measure(tape.value(rev.v_hat).row_view(r),
                                                     tape.value(rev.v_target).row_view(r));
        out.records.push_back({ds.samples[n].id, i, metrics::Direction::av_to_q, dq.mse, dq.euclidean, correct});
        out.records.push_back({ds.samples[n].id, i, metrics::Direction::aq_to_v, dv.mse, dv.euclidean, correct});
      }
    }
  }
  return out;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

MetricsReport summarize(const Evaluation& eval, const data::Dataset& ds) {
  std::vector<std::vector<std::size_t>> labels;
  labels.reserve(ds.size());
  for (const auto& s : ds.samples) labels.push_back(s.answers);

  MetricsReport report;
  report.samples = ds.size();
  report.attribute_accuracy = metrics::attribute_accuracy(eval.predictions, labels, ds.schema);
  report.mean_accuracy = mean_of(report.attribute_accuracy);
  report.sfr_q_accuracy = metrics::attribute_accuracy(eval.sfr_q_predictions, labels, ds.schema);
  report.sfr_v_accuracy = metrics::attribute_accuracy(eval.sfr_v_predictions, labels, ds.schema);

  std::vector<double> scores;
  std::vector<int> diag;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    if (!ds.samples[n].diagnosis) continue;
    scores.push_back(eval.diagnosis_scores[n]);
    diag.push_back(*ds.samples[n].diagnosis);
  }
  if (!scores.empty()) report.diagnosis = metrics::binary_metrics(scores, diag);
  report.reliability = metrics::reliability_report(eval.records, ds.schema);
  return report;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const MetricsReport& report, const AttributeSchema& schema) {
  json attrs = json::array();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    attrs.push_back({{"name", schema[i].name},
                     {"accuracy", report.attribute_accuracy.at(i)},
                     {"sfr_q_accuracy", report.sfr_q_accuracy.at(i)},
                     {"sfr_v_accuracy", report.sfr_v_accuracy.at(i)}});
  }
  json diag = nullptr;
  if (report.diagnosis) {
    const auto& d = *report.diagnosis;
    diag = {{"tp", d.tp}, {"tn", d.tn}, {"fp", d.fp}, {"fn", d.fn}, {"sen", optional_number(d.sen)},
            {"spe", optional_number(d.spe)}, {"acc", d.acc}, {"auc", optional_number(d.auc)}};
  }
  json groups = json::array();
  for (const auto& g : report.reliability.groups) {
    groups.push_back({{"attribute", g.attribute_name},
                      {"direction", metrics::to_string(g.direction)},
                      {"n_correct", g.n_correct},
                      {"n_incorrect", g.n_incorrect},
                      {"mse_correct", g.mse_correct},
                      {"mse_incorrect", g.mse_incorrect},
                      {"euclidean_correct", g.euclidean_correct},
                      {"euclidean_incorrect", g.euclidean_incorrect},
                      {"mse_verdict", metrics::to_string(g.mse_verdict)},
                      {"euclidean_verdict", metrics::to_string(g.euclidean_verdict)}});
  }
  return {{"samples", report.samples},
          {"mean_accuracy", report.mean_accuracy},
          {"attributes", attrs},
          {"diagnosis", diag},
          {"reliability", groups}};
}

}  // namespace trivqa::cli
