#include <cmath>
#include <stdexcept>

#include "trivqa/data.hpp"

namespace trivqa::data {

namespace {

constexpr double kMinVariance = 1e-12;

}  // namespace

FeatureStats fit_normalizer(const Dataset& train) {
  if (train.samples.empty()) throw std::invalid_argument("fit_normalizer: empty training split");
  FeatureStats st;
  st.v_mean.assign(train.d_v, 0.0);
  st.q_mean.assign(train.d_q, 0.0);
  for (const auto& s : train.samples) {
    for (std::size_t j = 0; j < train.d_v; ++j) st.v_mean[j] += s.v_raw[j];
    for (const auto& q : s.q_raw) {
      for (std::size_t j = 0; j < train.d_q; ++j) st.q_mean[j] += q[j];
    }
  }
  const double n_v = static_cast<double>(train.samples.size());
  const double n_q = n_v * static_cast<double>(train.schema.size());
  for (auto& m : st.v_mean) m /= n_v;
  for (auto& m : st.q_mean) m /= n_q;

  std::vector<double> v_var(train.d_v, 0.0), q_var(train.d_q, 0.0);
  for (const auto& s : train.samples) {
    for (std::size_t j = 0; j < train.d_v; ++j) v_var[j] += (s.v_raw[j] - st.v_mean[j]) * (s.v_raw[j] - st.v_mean[j]);
    for (const auto& q : s.q_raw) {
      for (std::size_t j = 0; j < train.d_q; ++j) q_var[j] += (q[j] - st.q_mean[j]) * (q[j] - st.q_mean[j]);
    }
  }
  const auto to_std = [&](std::vector<double>& var, double count, const char* tag) {
    std::vector<double> out(var.size());
    for (std::size_t j = 0; j < var.size(); ++j) {
      double v = var[j] / count;
      if (v < kMinVariance) {
        st.warnings.push_back(std::string(tag) + "[" + std::to_string(j) + "] has zero variance; clamped to 1");
        v = 1.0;
      }
      out[j] = std::sqrt(v);
    }
    return out;
  };
  st.v_std = to_std(v_var, n_v, "v");
  st.q_std = to_std(q_var, n_q, "q");
  return st;
}

Dataset normalize(const Dataset& ds, const FeatureStats& stats) {
  if (stats.v_mean.size() != ds.d_v || stats.q_mean.size() != ds.d_q) {
    throw std::invalid_argument("normalize: statistics do not match dataset dimensions");
  }
  Dataset out = ds;
  for (auto& s : out.samples) {
    for (std::size_t j = 0; j < ds.d_v; ++j) s.v_raw[j] = (s.v_raw[j] - stats.v_mean[j]) / stats.v_std[j];
    for (auto& q : s.q_raw) {
      for (std::size_t j = 0; j < ds.d_q; ++j) q[j] = (q[j] - stats.q_mean[j]) / stats.q_std[j];
    }
  }
  return out;
}

}  // namespace trivqa::data
