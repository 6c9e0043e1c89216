#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "trivqa/metrics.hpp"

namespace trivqa::metrics {

const char* to_string(Direction d) { return d == Direction::av_to_q ? "av_to_q" : "aq_to_v"; }

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::separated: return "separated";
    case Verdict::not_separated: return "not_separated";
    case Verdict::indeterminate: return "indeterminate";
  }
  return "?";
}

Distance reliability_measure(std::span<const double> inferred, std::span<const double> target) {
  if (inferred.size() != target.size() || inferred.empty()) {
    throw std::invalid_argument("reliability_measure: length mismatch " + std::to_string(inferred.size()) + " vs " +
                                std::to_string(target.size()));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < inferred.size(); ++i) {
    const double diff = inferred[i] - target[i];
    sq += diff * diff;
  }
  return {sq / static_cast<double>(inferred.size()), std::sqrt(sq)};
}

const ReliabilityGroup& ReliabilityReport::group(std::size_t attribute, Direction d) const {
  for (const auto& g : groups) {
    if (g.attribute == attribute && g.direction == d) return g;
  }
  throw std::out_of_range("reliability group not found");
}

std::size_t ReliabilityReport::separated_count(Direction d) const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.direction == d && g.mse_verdict == Verdict::separated ? 1 : 0;
  return n;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Verdict compare(const ReliabilityGroup& g, double correct, double incorrect) {
  if (g.n_correct == 0 || g.n_incorrect == 0) return Verdict::indeterminate;
  return correct < incorrect ? Verdict::separated : Verdict::not_separated;
}

}  // namespace

std::string ReliabilityReport::to_csv() const {
  std::string out =
      "attribute,direction,n_correct,n_incorrect,mse_correct,mse_incorrect,euclidean_correct,euclidean_incorrect,"
      "mse_verdict,euclidean_verdict\n";
  for (const auto& g : groups) {
    out += g.attribute_name + "," + to_string(g.direction) + "," + std::to_string(g.n_correct) + "," +
           std::to_string(g.n_incorrect) + "," + fmt(g.mse_correct) + "," + fmt(g.mse_incorrect) + "," +
           fmt(g.euclidean_correct) + "," + fmt(g.euclidean_incorrect) + "," + to_string(g.mse_verdict) + "," +
           to_string(g.euclidean_verdict) + "\n";
  }
  return out;
}

ReliabilityReport reliability_report(std::span<const ReliabilityRecord> records, const AttributeSchema& schema) {
  ReliabilityReport report;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    for (Direction d : {Direction::av_to_q, Direction::aq_to_v}) {
      ReliabilityGroup g;
      g.attribute = i;
      g.attribute_name = schema[i].name;
      g.direction = d;
      report.groups.push_back(g);
    }
  }
  for (const auto& r : records) {
    if (r.attribute >= schema.size()) throw std::out_of_range("reliability record attribute out of range");
    auto& g = report.groups[2 * r.attribute + (r.direction == Direction::av_to_q ? 0 : 1)];
    if (r.answer_correct) {
      ++g.n_correct;
      g.mse_correct += r.mse;
      g.euclidean_correct += r.euclidean;
    } else {
      ++g.n_incorrect;
      g.mse_incorrect += r.mse;
      g.euclidean_incorrect += r.euclidean;
    }
  }
  for (auto& g : report.groups) {
    if (g.n_correct) {
      g.mse_correct /= static_cast<double>(g.n_correct);
      g.euclidean_correct /= static_cast<double>(g.n_correct);
    }
    if (g.n_incorrect) {
      g.mse_incorrect /= static_cast<double>(g.n_incorrect);
      g.euclidean_incorrect /= static_cast<double>(g.n_incorrect);
    }
    g.mse_verdict = compare(g, g.mse_correct, g.mse_incorrect);
    g.euclidean_verdict = compare(g, g.euclidean_correct, g.euclidean_incorrect);
  }
  return report;
}

void CurveTracker::append(const CurveRow& row) {
  if (!rows_.empty() && row.epoch <= rows_.back().epoch) {
    throw std::invalid_argument("curve_tracker: epoch " + std::to_string(row.epoch) + " does not follow epoch " +
                                std::to_string(rows_.back().epoch));
  }
  rows_.push_back(row);
}

std::string CurveTracker::to_csv() const {
  std::string out = "epoch,av_to_q_mse,av_to_q_euclidean,aq_to_v_mse,aq_to_v_euclidean\n";
  for (const auto& r : rows_) {
    out += std::to_string(r.epoch) + "," + fmt(r.av_to_q_mse) + "," + fmt(r.av_to_q_euclidean) + "," +
           fmt(r.aq_to_v_mse) + "," + fmt(r.aq_to_v_euclidean) + "\n";
  }
  return out;
}

}  // namespace trivqa::metrics
