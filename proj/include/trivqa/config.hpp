#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "trivqa/data.hpp"
#include "trivqa/losses.hpp"
#include "trivqa/model.hpp"
#include "trivqa/optimizer.hpp"

namespace trivqa::cli {

/// Rejected configuration; `field()` is the dotted path of the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class DatasetSource { synth, manifest };

struct DatasetConfig {
  DatasetSource source = DatasetSource::synth;
  /// `synth.seed` is ignored; the run seed drives generation.
  data::SynthConfig synth;
  std::filesystem::path manifest;
};

struct ModelSection {
  std::size_t d = 64;
  std::size_t forward_hidden_layers = 1;
  std::size_t reverse_hidden_layers = 1;
  std::size_t diag_hidden_layers = 1;
  model::FusionMode fusion = model::FusionMode::add;
  bool reverse_stop_gradient = false;
};

struct TrainingConfig {
  int epochs = 30;
  std::size_t batch_size = 32;
  double test_fraction = 0.3;
  bool normalize = true;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelSection model;
  loss::AblationMode mode = loss::AblationMode::full;
  /// Resolved weights: defaults for `mode` overlaid with explicit entries.
  loss::LossWeights weights = loss::LossWeights::for_mode(loss::AblationMode::full);
  nd::OptimizerConfig optimizer;
  TrainingConfig training;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";

  /// Throws ConfigError on the first invalid field.
  void validate() const;
  model::ModelConfig model_config(std::size_t d_v, std::size_t d_q) const;
  data::SynthConfig synth_config() const;
};

/// Missing keys take defaults; unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// The output directory is left out when `include_out_dir` is false so that
/// reruns into different directories stay byte-identical.
nlohmann::json to_json(const RunConfig& cfg, bool include_out_dir = true);
/// FNV-1a over the compact dump of the resolved config, output directory excluded.
std::uint64_t config_hash(const RunConfig& cfg);
/// Pretty-printed resolved config, newline terminated.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Seeds for independent streams (split, init, batching) derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace trivqa::cli
