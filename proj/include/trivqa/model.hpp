#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trivqa/schema.hpp"
#include "trivqa/tape.hpp"

namespace trivqa::model {

using nd::ParamId;
using nd::ParamStore;
using nd::Tape;
using nd::Tensor;
using nd::Var;

enum class FusionMode { add, concat };

const char* to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& text);

/// Where a fusion happens. In concat mode every site owns its own 2d -> d map;
/// the second forward pass reuses the forward site.
enum class FusionSite { forward, reverse_q, reverse_v };

struct ModelConfig {
  std::size_t d_v = 0;
  std::size_t d_q = 0;
  /// Common projected dimension shared by both modalities.
  std::size_t d = 64;
  std::size_t forward_hidden_layers = 1;
  std::size_t reverse_hidden_layers = 1;
  std::size_t diag_hidden_layers = 1;
  FusionMode fusion = FusionMode::add;
  /// Cut gradients from the reverse branches back into the answer distribution.
  bool reverse_stop_gradient = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct Linear {
  ParamId weight = 0;  // [in x out]
  ParamId bias = 0;    // [1 x out]
};

/// Stack of affine layers with relu between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  Var apply(Tape& tape, const ParamStore& params, Var x) const;
};

struct ForwardSlice {
  Var fused;
  Var logits;
  Var probs;  // a_pre for this attribute
};

struct ReverseSlice {
  Var answer_embedding;
  Var q_hat;
  Var q_target;  // projected true question feature, gradient-stopped
  Var v_hat;
  Var v_target;  // projected true visual feature, gradient-stopped
  Var sfr_q_logits;
  Var sfr_v_logits;
};

struct BatchInput {
  Tensor v_raw;                // [B x d_v]
  std::vector<Tensor> q_raw;   // K entries of [B x d_q]

  std::size_t batch_size() const { return v_raw.rows(); }
};

struct PassOptions {
  bool reverse = true;
  bool diagnosis = true;
  /// Feed one-hot(argmax a_pre) to the reverse heads. Evaluation only.
  bool hard_answer = false;
};

struct PassOutput {
  Var v_proj;
  std::vector<Var> q_proj;
  std::vector<ForwardSlice> forward;
  std::vector<ReverseSlice> reverse;  // empty unless PassOptions::reverse
  Var diag_logits;                     // invalid unless PassOptions::diagnosis
};

/// Forward reasoning F (question + image -> answer), the two reverse
/// reasoners G (answer + image -> question) and H (answer + question ->
/// image), the second forward pass through F on reverse-inferred features,
/// and the diagnosis readout over all fused attribute features.
class TriVqaModel {
 public:
  TriVqaModel(AttributeSchema schema, ModelConfig cfg, std::uint64_t seed);
  /// Adopts externally loaded parameters; names and shapes must match the
  /// layout implied by (schema, cfg).
  TriVqaModel(AttributeSchema schema, ModelConfig cfg, ParamStore params);

  const AttributeSchema& schema() const { return schema_; }
  const ModelConfig& config() const { return cfg_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  Var project_v(Tape& tape, Var v_raw) const;
  Var project_q(Tape& tape, Var q_raw) const;
  Var fuse(Tape& tape, Var x, Var y, FusionSite site = FusionSite::forward) const;
  /// F_i applied to an already-fused feature; returns logits.
  Var forward_head(Tape& tape, Var fused, std::size_t attr) const;
  ForwardSlice forward_f(Tape& tape, Var v_raw, Var q_raw, std::size_t attr) const;
  /// answer_embed_i applied to rows of probabilities; rejects rows off the simplex.
  Var embed_answer(Tape& tape, Var probs, std::size_t attr, bool stop_gradient) const;
  Var reverse_g(Tape& tape, Var answer_embedding, Var v_proj) const;
  Var reverse_h(Tape& tape, Var answer_embedding, Var q_proj) const;
  /// Second forward pass on an inferred question feature and the true image.
  Var sfr_q(Tape& tape, Var q_hat, Var v_proj, std::size_t attr) const;
  /// Second forward pass on the true question and an inferred image feature.
  Var sfr_v(Tape& tape, Var q_proj, Var v_hat, std::size_t attr) const;
  /// Diagnosis logits from K fused features.
  Var diagnose(Tape& tape, std::span<const Var> fused) const;
  /// Diagnosis logits from an already concatenated [B x K*d] input.
  Var diagnose_concat(Tape& tape, Var concatenated) const;

  PassOutput run(Tape& tape, const BatchInput& batch, const PassOptions& options = {}) const;

  const Mlp& forward_head_mlp(std::size_t attr) const { return f_heads_.at(attr); }
  const Mlp& g_head() const { return g_head_; }
  const Mlp& h_head() const { return h_head_; }
  const Mlp& diag_head() const { return diag_head_; }
  ParamId answer_embedding_param(std::size_t attr) const { return answer_embed_.at(attr); }
  const Linear& proj_v() const { return proj_v_; }
  const Linear& proj_q() const { return proj_q_; }

 private:
  void declare(ParamStore& store, std::uint64_t seed, bool initialize);
  void check_attr(std::size_t attr) const;

  AttributeSchema schema_;
  ModelConfig cfg_;
  ParamStore params_;
  Linear proj_v_;
  Linear proj_q_;
  std::vector<Linear> fuse_maps_;  // concat mode only, indexed by FusionSite
  std::vector<Mlp> f_heads_;
  std::vector<ParamId> answer_embed_;  // [C_i x d]
  Mlp g_head_;
  Mlp h_head_;
  Mlp diag_head_;
};

}  // namespace trivqa::model
