#include "trivqa/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace trivqa::model {

const char* to_string(FusionMode mode) { return mode == FusionMode::add ? "add" : "concat"; }

FusionMode parse_fusion_mode(const std::string& text) {
  if (text == "add") return FusionMode::add;
  if (text == "concat") return FusionMode::concat;
  throw std::invalid_argument("unknown fusion mode '" + text + "' (expected add|concat)");
}

void ModelConfig::validate() const {
  if (d_v == 0) throw std::invalid_argument("model.d_v must be positive");
  if (d_q == 0) throw std::invalid_argument("model.d_q must be positive");
  if (d == 0) throw std::invalid_argument("model.d must be positive");
}

Var Mlp::apply(Tape& tape, const ParamStore& params, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = tape.add_row(tape.matmul(x, tape.parameter(params, layers[i].weight)), tape.parameter(params, layers[i].bias));
    if (i + 1 < layers.size()) x = tape.relu(x);
  }
  return x;
}

namespace {

class Declarer {
 public:
  Declarer(ParamStore& store, std::uint64_t seed, bool initialize)
      : store_(store), rng_(seed), initialize_(initialize) {}

  ParamId block(const std::string& name, std::size_t rows, std::size_t cols, double stddev) {
    Tensor t = Tensor::matrix(rows, cols);
    if (initialize_ && stddev > 0.0) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (auto& x : t.data()) x = dist(rng_);
    }
    return store_.add(name, std::move(t));
  }

  Linear linear(const std::string& name, std::size_t in, std::size_t out, double gain) {
    Linear l;
    l.weight = block(name + ".weight", in, out, std::sqrt(gain / static_cast<double>(in)));
    l.bias = block(name + ".bias", 1, out, 0.0);
    return l;
  }

  Mlp mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t hidden_layers, std::size_t out) {
    Mlp m;
    std::size_t width = in;
    for (std::size_t i = 0; i < hidden_layers; ++i) {
      m.layers.push_back(linear(name + ".layer" + std::to_string(i), width, hidden, 2.0));
      width = hidden;
    }
    m.layers.push_back(linear(name + ".layer" + std::to_string(hidden_layers), width, out, 1.0));
    return m;
  }

 private:
  ParamStore& store_;
  std::mt19937_64 rng_;
  bool initialize_;
};

void require_width(const Tape& tape, Var x, std::size_t width, const char* what) {
  if (tape.value(x).cols() != width) {
    throw std::invalid_argument(std::string(what) + ": expected width " + std::to_string(width) + ", got " +
                                nd::shape_str(tape.value(x).shape()));
  }
}

}  // namespace

TriVqaModel::TriVqaModel(AttributeSchema schema, ModelConfig cfg, std::uint64_t seed)
    : schema_(std::move(schema)), cfg_(cfg) {
  schema_.validate();
  cfg_.validate();
  declare(params_, seed, true);
}

TriVqaModel::TriVqaModel(AttributeSchema schema, ModelConfig cfg, ParamStore params)
    : schema_(std::move(schema)), cfg_(cfg) {
  schema_.validate();
  cfg_.validate();
  declare(params_, 0, false);
  if (params.size() != params_.size()) {
    throw std::invalid_argument("parameter block count " + std::to_string(params.size()) + " does not match model layout (" +
                                std::to_string(params_.size()) + ")");
  }
  for (ParamId id = 0; id < params_.size(); ++id) {
    if (params.name(id) != params_.name(id) || params.value(id).shape() != params_.value(id).shape()) {
      throw std::invalid_argument("parameter block " + std::to_string(id) + " '" + params.name(id) + "' " +
                                  nd::shape_str(params.value(id).shape()) + " does not match expected '" +
                                  params_.name(id) + "' " + nd::shape_str(params_.value(id).shape()));
    }
  }
  params_ = std::move(params);
}

void TriVqaModel::declare(ParamStore& store, std::uint64_t seed, bool initialize) {
  Declarer decl(store, seed, initialize);
  const std::size_t d = cfg_.d;
  proj_v_ = decl.linear("proj_v", cfg_.d_v, d, 1.0);
  proj_q_ = decl.linear("proj_q", cfg_.d_q, d, 1.0);
  if (cfg_.fusion == FusionMode::concat) {
    fuse_maps_ = {decl.linear("fuse.forward", 2 * d, d, 1.0), decl.linear("fuse.reverse_q", 2 * d, d, 1.0),
                  decl.linear("fuse.reverse_v", 2 * d, d, 1.0)};
  }
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    f_heads_.push_back(decl.mlp("f_head." + std::to_string(i), d, d, cfg_.forward_hidden_layers,
                                schema_[i].cardinality));
  }
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    answer_embed_.push_back(decl.block("answer_embed." + std::to_string(i), schema_[i].cardinality, d, 1.0));
  }
  g_head_ = decl.mlp("g_head", d, d, cfg_.reverse_hidden_layers, d);
  h_head_ = decl.mlp("h_head", d, d, cfg_.reverse_hidden_layers, d);
  diag_head_ = decl.mlp("diag_head", schema_.size() * d, d, cfg_.diag_hidden_layers, 2);
}

void TriVqaModel::check_attr(std::size_t attr) const {
  if (attr >= schema_.size()) {
    throw std::out_of_range("attribute index " + std::to_string(attr) + " outside schema of size " +
                            std::to_string(schema_.size()));
  }
}

Var TriVqaModel::project_v(Tape& tape, Var v_raw) const {
  require_width(tape, v_raw, cfg_.d_v, "project_v");
  return Mlp{{proj_v_}}.apply(tape, params_, v_raw);
}

Var TriVqaModel::project_q(Tape& tape, Var q_raw) const {
  require_width(tape, q_raw, cfg_.d_q, "project_q");
  return Mlp{{proj_q_}}.apply(tape, params_, q_raw);
}

Var TriVqaModel::fuse(Tape& tape, Var x, Var y, FusionSite site) const {
  if (tape.value(x).shape() != tape.value(y).shape()) {
    throw std::invalid_argument("fuse: shape mismatch " + nd::shape_str(tape.value(x).shape()) + " vs " +
                                nd::shape_str(tape.value(y).shape()));
  }
  if (cfg_.fusion == FusionMode::add) return tape.add(x, y);
  const Var parts[] = {x, y};
  return Mlp{{fuse_maps_.at(static_cast<std::size_t>(site))}}.apply(tape, params_, tape.concat_cols(parts));
}

Var TriVqaModel::forward_head(Tape& tape, Var fused, std::size_t attr) const {
  check_attr(attr);
  require_width(tape, fused, cfg_.d, "forward_head");
  return f_heads_[attr].apply(tape, params_, fused);
}

ForwardSlice TriVqaModel::forward_f(Tape& tape, Var v_raw, Var q_raw, std::size_t attr) const {
  check_attr(attr);
  ForwardSlice out;
  out.fused = fuse(tape, project_q(tape, q_raw), project_v(tape, v_raw), FusionSite::forward);
  out.logits = forward_head(tape, out.fused, attr);
  out.probs = tape.softmax_rows(out.logits);
  return out;
}

Var TriVqaModel::embed_answer(Tape& tape, Var probs, std::size_t attr, bool stop_gradient) const {
  check_attr(attr);
  const Tensor& p = tape.value(probs);
  require_width(tape, probs, schema_[attr].cardinality, "embed_answer");
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double total = 0.0;
    for (double x : p.row_view(r)) {
      if (x < -1e-6) throw std::invalid_argument("embed_answer: negative probability in row " + std::to_string(r));
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::invalid_argument("embed_answer: row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
  }
  const Var input = stop_gradient ? tape.stop_gradient(probs) : probs;
  return tape.matmul(input, tape.parameter(params_, answer_embed_[attr]));
}

Var TriVqaModel::reverse_g(Tape& tape, Var answer_embedding, Var v_proj) const {
  return g_head_.apply(tape, params_, fuse(tape, answer_embedding, v_proj, FusionSite::reverse_q));
}

Var TriVqaModel::reverse_h(Tape& tape, Var answer_embedding, Var q_proj) const {
  return h_head_.apply(tape, params_, fuse(tape, answer_embedding, q_proj, FusionSite::reverse_v));
}

Var TriVqaModel::sfr_q(Tape& tape, Var q_hat, Var v_proj, std::size_t attr) const {
  return forward_head(tape, fuse(tape, q_hat, v_proj, FusionSite::forward), attr);
}

Var TriVqaModel::sfr_v(Tape& tape, Var q_proj, Var v_hat, std::size_t attr) const {
  return forward_head(tape, fuse(tape, q_proj, v_hat, FusionSite::forward), attr);
}

Var TriVqaModel::diagnose(Tape& tape, std::span<const Var> fused) const {
  if (fused.size() != schema_.size()) {
    throw std::invalid_argument("diagnose: expected " + std::to_string(schema_.size()) + " attribute features, got " +
                                std::to_string(fused.size()));
  }
  return diagnose_concat(tape, tape.concat_cols(fused));
}

Var TriVqaModel::diagnose_concat(Tape& tape, Var concatenated) const {
  require_width(tape, concatenated, schema_.size() * cfg_.d, "diagnose");
  return diag_head_.apply(tape, params_, concatenated);
}

namespace {

Tensor one_hot_argmax(const Tensor& probs) {
  Tensor out = Tensor::matrix(probs.rows(), probs.cols());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row_view(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out(r, best) = 1.0;
  }
  return out;
}

}  // namespace

PassOutput TriVqaModel::run(Tape& tape, const BatchInput& batch, const PassOptions& options) const {
  const std::size_t k = schema_.size();
  if (batch.q_raw.size() != k) {
    throw std::invalid_argument("batch carries " + std::to_string(batch.q_raw.size()) + " question features for " +
                                std::to_string(k) + " attributes");
  }
  PassOutput out;
  out.v_proj = project_v(tape, tape.constant(batch.v_raw));
  for (std::size_t i = 0; i < k; ++i) {
    if (batch.q_raw[i].rows() != batch.batch_size()) throw std::invalid_argument("question batch size mismatch");
    const Var q_proj = project_q(tape, tape.constant(batch.q_raw[i]));
    out.q_proj.push_back(q_proj);
    ForwardSlice f;
    f.fused = fuse(tape, q_proj, out.v_proj, FusionSite::forward);
    f.logits = forward_head(tape, f.fused, i);
    f.probs = tape.softmax_rows(f.logits);
    out.forward.push_back(f);
  }

  if (options.reverse) {
    for (std::size_t i = 0; i < k; ++i) {
      ReverseSlice r;
      const Var answer = options.hard_answer ? tape.constant(one_hot_argmax(tape.value(out.forward[i].probs)))
                                             : out.forward[i].probs;
      r.answer_embedding = embed_answer(tape, answer, i, cfg_.reverse_stop_gradient);
      r.q_hat = reverse_g(tape, r.answer_embedding, out.v_proj);
      r.v_hat = reverse_h(tape, r.answer_embedding, out.q_proj[i]);
      r.q_target = tape.stop_gradient(out.q_proj[i]);
      r.v_target = tape.stop_gradient(out.v_proj);
      r.sfr_q_logits = sfr_q(tape, r.q_hat, out.v_proj, i);
      r.sfr_v_logits = sfr_v(tape, out.q_proj[i], r.v_hat, i);
      out.reverse.push_back(r);
    }
  }

  if (options.diagnosis) {
    // The diagnosis readout sits on gradient-stopped attribute features.
    std::vector<Var> detached;
    for (const auto& f : out.forward) detached.push_back(tape.stop_gradient(f.fused));
    out.diag_logits = diagnose(tape, detached);
  }
  return out;
}

}  // namespace trivqa::model
