#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "trivqa/config.hpp"
#include "trivqa/data.hpp"
#include "trivqa/model.hpp"

namespace trivqa::cli {

/// Everything needed to rebuild a trained model and feed it data the way it
/// was trained.
struct Checkpoint {
  RunConfig config;
  AttributeSchema schema;
  model::ModelConfig model;
  nd::ParamStore params;
  /// Absent when the run trained on unnormalized features.
  std::optional<data::FeatureStats> stats;

  std::uint64_t config_hash() const;
  std::uint64_t schema_hash() const;
};

/// Fingerprint of the schema and feature widths; eval refuses data whose
/// fingerprint differs from the checkpoint's.
std::uint64_t schema_hash(const AttributeSchema& schema, std::size_t d_v, std::size_t d_q);

/// Layout (little-endian):
///   "TRIVQACK" | u64 version | u64 config hash | u64 schema hash
///   | u64 header length | header JSON | u64 block count
///   | per block: u64 name length, name, u64 rank, rank x u64 dims, f64 data
/// Parameter blocks come first in declaration order, then the normalization
/// statistics as "norm.v_mean", "norm.v_std", "norm.q_mean", "norm.q_std".
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trivqa::cli
