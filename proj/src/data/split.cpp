#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include "trivqa/data.hpp"

namespace trivqa::data {

Split split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("split: test_fraction must lie in (0, 1)");
  }
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    strata[{s.center, s.diagnosis.value_or(-1)}].push_back(i);
  }

  std::mt19937_64 rng(seed);
  std::vector<bool> in_test(ds.samples.size(), false);
  for (auto& [key, members] : strata) {
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(members.size())));
    if (n_test == 0 || n_test == members.size()) {
      const std::string label = key.second < 0 ? "unlabeled" : std::to_string(key.second);
      throw std::invalid_argument("split: stratum (center=" + key.first + ", label=" + label + ") with " +
                                  std::to_string(members.size()) + " samples is too small to split");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < n_test; ++j) in_test[members[j]] = true;
  }

  Split out;
  out.train.schema = out.test.schema = ds.schema;
  out.train.d_v = out.test.d_v = ds.d_v;
  out.train.d_q = out.test.d_q = ds.d_q;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    (in_test[i] ? out.test : out.train).samples.push_back(ds.samples[i]);
  }
  return out;
}

}  // namespace trivqa::data
