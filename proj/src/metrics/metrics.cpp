#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "trivqa/metrics.hpp"

namespace trivqa::metrics {

std::vector<double> attribute_accuracy(const std::vector<std::vector<std::size_t>>& predictions,
                                       const std::vector<std::vector<std::size_t>>& labels,
                                       const AttributeSchema& schema) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("attribute_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw std::invalid_argument("attribute_accuracy: no samples");
  const std::size_t k = schema.size();
  std::vector<std::size_t> correct(k, 0);
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    if (predictions[s].size() != k || labels[s].size() != k) {
      throw std::invalid_argument("attribute_accuracy: sample " + std::to_string(s) + " has wrong attribute count");
    }
    for (std::size_t i = 0; i < k; ++i) correct[i] += predictions[s][i] == labels[s][i] ? 1 : 0;
  }
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = static_cast<double>(correct[i]) / static_cast<double>(predictions.size());
  }
  return out;
}

std::optional<double> auc_rank(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc_rank: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a run of ties shares the mean of its ranks.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) rank[order[t]] = shared;
    i = j;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    } else if (labels[i] == 0) {
      neg += 1.0;
    } else {
      throw std::invalid_argument("auc_rank: labels must be 0 or 1");
    }
  }
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

BinaryMetrics binary_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw std::invalid_argument("binary_metrics: length mismatch");
  if (scores.empty()) throw std::invalid_argument("binary_metrics: no samples");
  BinaryMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? m.tp : m.fn)++;
    } else if (labels[i] == 0) {
      (predicted ? m.fp : m.tn)++;
    } else {
      throw std::invalid_argument("binary_metrics: labels must be 0 or 1");
    }
  }
  const auto ratio = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
  if (m.tp + m.fn > 0) m.sen = ratio(m.tp, m.tp + m.fn);
  if (m.tn + m.fp > 0) m.spe = ratio(m.tn, m.tn + m.fp);
  m.acc = ratio(m.tp + m.tn, scores.size());
  m.auc = auc_rank(scores, labels);
  return m;
}

}  // namespace trivqa::metrics
