#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trivqa/config.hpp"
#include "trivqa/data.hpp"
#include "trivqa/losses.hpp"
#include "trivqa/metrics.hpp"
#include "trivqa/model.hpp"

namespace trivqa::cli {

/// Raised when a training step produces a non-finite loss or gradient.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, int last_finite_epoch, const std::string& detail);
  int epoch() const { return epoch_; }
  /// -1 when not even the first epoch completed.
  int last_finite_epoch() const { return last_finite_; }

 private:
  int epoch_;
  int last_finite_;
};

/// Dataset as loaded or generated, split, and (optionally) normalized with
/// training-split statistics.
struct PreparedData {
  data::Dataset train;
  data::Dataset test;
  std::optional<data::FeatureStats> stats;
};

data::Dataset load_dataset(const RunConfig& cfg);
PreparedData prepare_data(const RunConfig& cfg, const data::Dataset& raw);
/// Re-applies a checkpoint's split and normalization to raw data.
PreparedData prepare_data(const RunConfig& cfg, const data::Dataset& raw,
                          const std::optional<data::FeatureStats>& stats);

model::BatchInput make_batch(const data::Dataset& ds, std::span<const std::size_t> rows);
loss::BatchLabels make_labels(const data::Dataset& ds, std::span<const std::size_t> rows);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  /// Sample-weighted means over the epoch's batches.
  loss::LossBreakdown losses;
  /// Running means of inferred-vs-true distances seen during the epoch.
  metrics::CurveRow curve;
};

struct TrainResult {
  model::TriVqaModel model;
  std::vector<EpochLog> epochs;
  metrics::CurveTracker curve;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Deterministic given (cfg, data): initialization and batch order come from
/// seeds derived from cfg.seed.
TrainResult train(const RunConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch = {});

/// CSV header + one row per epoch, every number printed with %.17g.
std::string epoch_log_csv(const std::vector<EpochLog>& epochs);

struct Evaluation {
  std::vector<std::vector<std::size_t>> predictions;  // [n][K]
  std::vector<std::vector<std::size_t>> sfr_q_predictions;
  std::vector<std::vector<std::size_t>> sfr_v_predictions;
  std::vector<double> diagnosis_scores;  // P(GIST) per sample
  std::vector<metrics::ReliabilityRecord> records;
};

struct EvalOptions {
  std::size_t batch_size = 256;
  bool hard_answer = false;
};

Evaluation evaluate(const model::TriVqaModel& model, const data::Dataset& ds, const EvalOptions& options = {});

struct MetricsReport {
  std::size_t samples = 0;
  std::vector<double> attribute_accuracy;
  double mean_accuracy = 0.0;
  std::vector<double> sfr_q_accuracy;
  std::vector<double> sfr_v_accuracy;
  /// Present when at least one sample carries a diagnosis label.
  std::optional<metrics::BinaryMetrics> diagnosis;
  metrics::ReliabilityReport reliability;
};

MetricsReport summarize(const Evaluation& eval, const data::Dataset& ds);
nlohmann::json to_json(const MetricsReport& report, const AttributeSchema& schema);

/// Mean of the per-attribute accuracies.
double mean_of(const std::vector<double>& values);

}  // namespace trivqa::cli
