#include <cmath>
#include <set>
#include <stdexcept>

#include "trivqa/data.hpp"

namespace trivqa::data {

void Dataset::validate() const {
  schema.validate();
  if (d_v == 0 || d_q == 0) throw std::invalid_argument("dataset: d_v and d_q must be positive");
  std::set<std::string> ids;
  const auto finite = [](const std::vector<double>& xs) {
    for (double x : xs) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const Sample& s = samples[r];
    const std::string where = "dataset record " + std::to_string(r) + " ('" + s.id + "')";
    if (!ids.insert(s.id).second) throw std::invalid_argument(where + ": duplicate id");
    if (s.v_raw.size() != d_v) throw std::invalid_argument(where + ": image feature length differs from d_v");
    if (s.q_raw.size() != schema.size() || s.answers.size() != schema.size()) {
      throw std::invalid_argument(where + ": expected " + std::to_string(schema.size()) + " attributes");
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (s.q_raw[i].size() != d_q) throw std::invalid_argument(where + ": question feature length differs from d_q");
      if (s.answers[i] >= schema[i].cardinality) throw std::invalid_argument(where + ": answer out of range");
      if (!finite(s.q_raw[i])) throw std::invalid_argument(where + ": non-finite question feature");
    }
    if (!finite(s.v_raw)) throw std::invalid_argument(where + ": non-finite image feature");
    if (s.diagnosis && *s.diagnosis != 0 && *s.diagnosis != 1) {
      throw std::invalid_argument(where + ": diagnosis must be 0 or 1");
    }
  }
}

}  // namespace trivqa::data
