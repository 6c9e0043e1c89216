#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "trivqa/data.hpp"

namespace trivqa::data {

void SynthConfig::validate() const {
  schema.validate();
  if (n < 1) throw std::invalid_argument("synth.n must be >= 1");
  if (d_v == 0 || d_q == 0) throw std::invalid_argument("synth.d_v and synth.d_q must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("synth.noise_sigma must be >= 0");
  if (!(class_sep > 0.0) || !std::isfinite(class_sep)) throw std::invalid_argument("synth.class_sep must be > 0");
  if (!(context_scale >= 0.0) || !std::isfinite(context_scale)) {
    throw std::invalid_argument("synth.context_scale must be >= 0");
  }
  if (!(quality_spread >= 0.0) || !std::isfinite(quality_spread)) {
    throw std::invalid_argument("synth.quality_spread must be >= 0");
  }
  if (!(attribute_coupling >= 0.0 && attribute_coupling <= 1.0)) {
    throw std::invalid_argument("synth.attribute_coupling must lie in [0, 1]");
  }
  if (centers < 1) throw std::invalid_argument("synth.centers must be >= 1");
}

namespace {

using Vec = std::vector<double>;

struct Generator {
  std::vector<std::vector<Vec>> image_protos;  // [K][C][d_v]
  std::vector<Vec> question_protos;            // [K][d_q]
  std::vector<Vec> image_context;              // [context_dim][d_v]
  std::vector<Vec> question_context;           // [context_dim][d_q]
};

Vec gaussian(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vec v(n);
  for (auto& x : v) x = stddev * dist(rng);
  return v;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize_unit(Vec& v) {
  const double norm = std::sqrt(dot(v, v));
  for (auto& x : v) x /= norm;
}

Generator build_generator(const SynthConfig& cfg, std::mt19937_64& rng) {
  Generator g;
  std::size_t total = 0;
  for (const auto& a : cfg.schema.attributes) total += a.cardinality;
  const bool orthogonal = total <= cfg.d_v;
  std::vector<Vec> basis;
  for (const auto& a : cfg.schema.attributes) {
    std::vector<Vec> protos;
    for (std::size_t c = 0; c < a.cardinality; ++c) {
      Vec p = gaussian(rng, cfg.d_v, 1.0);
      if (orthogonal) {
        for (const auto& b : basis) {
          const double proj = dot(p, b);
          for (std::size_t j = 0; j < p.size(); ++j) p[j] -= proj * b[j];
        }
      }
      normalize_unit(p);
      basis.push_back(p);
      protos.push_back(std::move(p));
    }
    g.image_protos.push_back(std::move(protos));
  }
  for (std::size_t i = 0; i < cfg.schema.size(); ++i) g.question_protos.push_back(gaussian(rng, cfg.d_q, 1.0));
  for (std::size_t c = 0; c < cfg.context_dim; ++c) {
    g.image_context.push_back(gaussian(rng, cfg.d_v, 1.0 / std::sqrt(static_cast<double>(cfg.context_dim))));
    g.question_context.push_back(gaussian(rng, cfg.d_q, 1.0 / std::sqrt(static_cast<double>(cfg.context_dim))));
  }
  return g;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Generator g = build_generator(cfg, rng);
  const std::size_t k = cfg.schema.size();

  Dataset ds;
  ds.schema = cfg.schema;
  ds.d_v = cfg.d_v;
  ds.d_q = cfg.d_q;
  ds.samples.reserve(cfg.n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> center_dist(0, cfg.centers - 1);
  std::size_t max_c = 0;
  for (const auto& a : cfg.schema.attributes) max_c = std::max(max_c, a.cardinality);
  std::uniform_int_distribution<std::size_t> profile_dist(0, max_c - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (std::size_t s = 0; s < cfg.n; ++s) {
    Sample sample;
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", s);
    sample.id = id;
    sample.center = "center" + std::to_string(center_dist(rng));

    const std::size_t profile = profile_dist(rng);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t c = cfg.schema[i].cardinality;
      std::uniform_int_distribution<std::size_t> answer_dist(0, c - 1);
      const bool typical = unit(rng) < cfg.attribute_coupling;
      const std::size_t free_answer = answer_dist(rng);
      sample.answers.push_back(typical ? (profile + i) % c : free_answer);
      if (sample.answers.back() == 0) ++zeros;
    }
    sample.diagnosis = 2 * zeros > k ? 1 : 0;

    Vec z(cfg.context_dim);
    for (auto& x : z) x = cfg.noise_sigma * cfg.context_scale * normal(rng);
    const double noise = cfg.noise_sigma * std::exp(cfg.quality_spread * normal(rng));

    sample.v_raw.assign(cfg.d_v, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const Vec& p = g.image_protos[i][sample.answers[i]];
      for (std::size_t j = 0; j < cfg.d_v; ++j) sample.v_raw[j] += cfg.class_sep * p[j];
    }
    for (std::size_t c = 0; c < cfg.context_dim; ++c) {
      for (std::size_t j = 0; j < cfg.d_v; ++j) sample.v_raw[j] += z[c] * g.image_context[c][j];
    }
    for (auto& x : sample.v_raw) x += noise * normal(rng);

    for (std::size_t i = 0; i < k; ++i) {
      Vec q = g.question_protos[i];
      for (std::size_t c = 0; c < cfg.context_dim; ++c) {
        for (std::size_t j = 0; j < cfg.d_q; ++j) q[j] += z[c] * g.question_context[c][j];
      }
      for (auto& x : q) x += noise * normal(rng);
      sample.q_raw.push_back(std::move(q));
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

PrototypeOracle synth_prototypes(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  return PrototypeOracle{build_generator(cfg, rng).image_protos};
}

std::vector<std::size_t> PrototypeOracle::classify(const std::vector<double>& v) const {
  std::vector<std::size_t> out;
  for (const auto& protos : prototypes) {
    std::size_t best = 0;
    double best_dist = 0.0;
    for (std::size_t c = 0; c < protos.size(); ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < v.size(); ++j) dist += (v[j] - protos[c][j]) * (v[j] - protos[c][j]);
      if (c == 0 || dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace trivqa::data
