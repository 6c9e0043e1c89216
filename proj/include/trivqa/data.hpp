#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trivqa/schema.hpp"

namespace trivqa::data {

/// One image with its K attribute questions and answers.
struct Sample {
  std::string id;
  std::string center;
  std::vector<double> v_raw;               // [d_v]
  std::vector<std::vector<double>> q_raw;  // [K][d_q]
  std::vector<std::size_t> answers;        // [K], answers[i] < C_i
  std::optional<int> diagnosis;            // 1 = GIST, 0 = non-GIST

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  AttributeSchema schema;
  std::size_t d_v = 0;
  std::size_t d_q = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  /// Uniform dimensions, unique ids, answers in range, finite features.
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

struct SynthConfig {
  AttributeSchema schema = AttributeSchema::eus_default(3);
  std::size_t n = 3000;
  std::size_t d_v = 32;
  std::size_t d_q = 16;
  double noise_sigma = 0.5;
  double class_sep = 1.75;
  std::size_t centers = 3;
  /// Width of a per-sample latent shared by the image and all its question
  /// features. Zero gives questions that are prototype plus noise only.
  std::size_t context_dim = 8;
  /// Strength of the shared latent relative to noise_sigma.
  double context_scale = 8.0;
  /// Per-sample acquisition quality: the noise of one sample (image and all
  /// its questions) is scaled by exp(quality_spread * g), g ~ N(0, 1).
  double quality_spread = 0.5;
  /// Answers follow a latent lesion profile u (uniform over max_i C_i): with
  /// this probability a_i = (u + i) mod C_i, otherwise a_i is uniform.
  double attribute_coupling = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

/// Pure function of `cfg`. Each (attribute, answer) owns a prototype
/// direction in image space (mutually orthonormal whenever d_v allows);
///   v = class_sep * sum_i proto(i, a_i) + noise_sigma * (context_scale * Mv z + s * e)
///   q_i = question_proto(i) + noise_sigma * (context_scale * Mq z + s * e)
/// where s is the sample's quality factor and e is fresh standard normal
/// noise. Answers are coupled through the profile (uniform marginals) and
/// diagnosis = GIST iff more than half of the attributes take answer 0.
Dataset synth_generate(const SynthConfig& cfg);

/// Index of the nearest image prototype per attribute, for learnability checks.
struct PrototypeOracle {
  std::vector<std::vector<std::vector<double>>> prototypes;  // [K][C_i][d_v], unit norm
  std::vector<std::size_t> classify(const std::vector<double>& v) const;
};
PrototypeOracle synth_prototypes(const SynthConfig& cfg);

struct Split {
  Dataset train;
  Dataset test;
};

/// Stratified by (center, diagnosis label): each stratum contributes
/// round(test_fraction * size) samples to test. Both halves keep the input
/// order. Throws when a stratum cannot place a sample on each side.
Split split(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Writes `manifest_path` (JSON) and a sibling `<stem>.bin` payload.
void save_features(const Dataset& ds, const std::filesystem::path& manifest_path);
Dataset load_features(const std::filesystem::path& manifest_path);

/// Per-dimension statistics from a training split. Question statistics are
/// pooled over all attributes so attribute identity survives normalization.
struct FeatureStats {
  std::vector<double> v_mean, v_std;
  std::vector<double> q_mean, q_std;
  std::vector<std::string> warnings;

  bool operator==(const FeatureStats&) const = default;
};

FeatureStats fit_normalizer(const Dataset& train);
Dataset normalize(const Dataset& ds, const FeatureStats& stats);

}  // namespace trivqa::data
