#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trivqa/checkpoint.hpp"
#include "trivqa/config.hpp"
#include "trivqa/grad_check.hpp"
#include "trivqa/trainer.hpp"

namespace trivqa::cli {

/// Dataset incompatible with a checkpoint.
class SchemaMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthOutput {
  std::filesystem::path manifest;
  data::Dataset dataset;
};
/// Writes <out_dir>/dataset.json, dataset.bin and config.json.
SynthOutput cmd_synth(const RunConfig& cfg);

struct TrainOutput {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  TrainResult result;
  PreparedData data;
};
/// Writes checkpoint.bin, train_log.csv, curve.csv and config.json under out_dir.
TrainOutput cmd_train(const RunConfig& cfg, const EpochCallback& on_epoch = {});

struct EvalOutput {
  MetricsReport train;
  MetricsReport test;
};
/// Evaluates a checkpoint on the train and test splits of `dataset` (or of
/// the checkpoint's own dataset source when none is given). Writes
/// metrics.json and attribute_accuracy.csv under out_dir.
EvalOutput cmd_eval(const std::filesystem::path& checkpoint, const std::optional<std::filesystem::path>& dataset,
                    const std::filesystem::path& out_dir, bool hard_answer = false);

struct AblationRow {
  loss::AblationMode mode;
  std::vector<double> attribute_accuracy;
  double mean_accuracy = 0.0;
};
/// Trains every ablation mode on the same data and seed; writes ablation.csv.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg);
std::string ablation_csv(const std::vector<AblationRow>& rows, const AttributeSchema& schema);

/// Test-split reliability report; writes reliability.csv and reliability.json.
metrics::ReliabilityReport cmd_reliability(const std::filesystem::path& checkpoint,
                                           const std::optional<std::filesystem::path>& dataset,
                                           const std::filesystem::path& out_dir, bool hard_answer = false);

struct GradCheckSuite {
  std::string name;
  nd::GradCheckReport report;
};
struct GradCheckOutput {
  std::vector<GradCheckSuite> suites;
  bool passed() const;
  std::string to_text() const;
};
struct GradCheckOptions {
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  /// Negative control: perturb one analytic gradient entry of this block.
  std::optional<std::string> corrupt_block;
};
/// Finite-difference checks of every tape op kind, each loss term, and the
/// full objective of a miniature model (d = 8, K = 2) in both fusion modes.
GradCheckOutput cmd_gradcheck(const GradCheckOptions& options = {});

}  // namespace trivqa::cli
