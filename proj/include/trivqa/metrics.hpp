#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trivqa/schema.hpp"

namespace trivqa::metrics {

/// Fraction of correct answers per attribute. Both inputs are [n][K].
std::vector<double> attribute_accuracy(const std::vector<std::vector<std::size_t>>& predictions,
                                       const std::vector<std::vector<std::size_t>>& labels,
                                       const AttributeSchema& schema);

struct BinaryMetrics {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::optional<double> sen;
  std::optional<double> spe;
  double acc = 0.0;
  /// Undefined when only one class is present.
  std::optional<double> auc;
};

/// Rank-statistic AUC (Mann-Whitney U / (P*N)) with tied scores sharing the
/// average rank, i.e. each tied (pos, neg) pair counts 1/2.
std::optional<double> auc_rank(std::span<const double> scores, std::span<const int> labels);

/// Thresholded at `threshold` on the positive-class score.
BinaryMetrics binary_metrics(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

enum class Direction { av_to_q, aq_to_v };
const char* to_string(Direction d);

struct Distance {
  double mse = 0.0;        // sum (x - y)^2 / d
  double euclidean = 0.0;  // sqrt(sum (x - y)^2)
};

Distance reliability_measure(std::span<const double> inferred, std::span<const double> target);

struct ReliabilityRecord {
  std::string sample_id;
  std::size_t attribute = 0;
  Direction direction = Direction::av_to_q;
  double mse = 0.0;
  double euclidean = 0.0;
  bool answer_correct = false;
};

enum class Verdict { separated, not_separated, indeterminate };
const char* to_string(Verdict v);

struct ReliabilityGroup {
  std::size_t attribute = 0;
  std::string attribute_name;
  Direction direction = Direction::av_to_q;
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
  double mse_correct = 0.0;
  double mse_incorrect = 0.0;
  double euclidean_correct = 0.0;
  double euclidean_incorrect = 0.0;
  /// Correct-answer mean MSE strictly below incorrect-answer mean MSE.
  Verdict mse_verdict = Verdict::indeterminate;
  Verdict euclidean_verdict = Verdict::indeterminate;
};

struct ReliabilityReport {
  std::vector<ReliabilityGroup> groups;  // attribute-major, av_to_q before aq_to_v

  const ReliabilityGroup& group(std::size_t attribute, Direction d) const;
  std::size_t separated_count(Direction d) const;
  std::string to_csv() const;
};

ReliabilityReport reliability_report(std::span<const ReliabilityRecord> records, const AttributeSchema& schema);

/// Mean inferred-vs-true feature distances per epoch for both reverse directions.
struct CurveRow {
  int epoch = 0;
  double av_to_q_mse = 0.0;
  double av_to_q_euclidean = 0.0;
  double aq_to_v_mse = 0.0;
  double aq_to_v_euclidean = 0.0;

  bool operator==(const CurveRow&) const = default;
};

class CurveTracker {
 public:
  /// Epochs must be strictly increasing.
  void append(const CurveRow& row);
  const std::vector<CurveRow>& rows() const { return rows_; }
  std::string to_csv() const;

 private:
  std::vector<CurveRow> rows_;
};

}  // namespace trivqa::metrics
