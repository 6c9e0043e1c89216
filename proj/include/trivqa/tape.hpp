#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trivqa/tensor.hpp"

namespace trivqa::nd {

using ParamId = std::size_t;

struct ParamBlock {
  std::string name;
  Tensor value;
};

/// Named, ordered collection of learnable tensors. Declaration order is the
/// serialization order and the optimizer's iteration order.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const { return blocks_.size(); }
  const ParamBlock& block(ParamId id) const { return blocks_.at(id); }
  const Tensor& value(ParamId id) const { return blocks_.at(id).value; }
  Tensor& value(ParamId id) { return blocks_.at(id).value; }
  const std::string& name(ParamId id) const { return blocks_.at(id).name; }
  std::optional<ParamId> find(const std::string& name) const;
  std::span<const ParamBlock> blocks() const { return blocks_; }

  /// Total scalar count across blocks.
  std::size_t parameter_count() const;

  bool operator==(const ParamStore&) const;

 private:
  std::vector<ParamBlock> blocks_;
};

/// Per-parameter gradients, one tensor per block (zeros where unreachable).
struct ParamGrads {
  std::vector<Tensor> values;
  std::vector<bool> reached;
};

enum class OpKind {
  constant,
  variable,
  parameter,
  matmul,
  add,
  sub,
  mul,
  scale,
  add_row,
  relu,
  softmax_rows,
  log_softmax_rows,
  concat_cols,
  sum,
};

const char* op_name(OpKind kind);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape;

class Gradients {
 public:
  /// Gradient of the loss w.r.t. a node; nullptr when the node is not reachable.
  const Tensor* of(Var v) const;
  /// Gradient of a bound parameter, or nullptr when it never entered the graph.
  const Tensor* param(ParamId id) const;
  ParamGrads collect(const ParamStore& store) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> node_grads_;
  std::vector<int> param_nodes_;
};

/// Define-by-run reverse-mode tape over 2-D tensors. Build a fresh tape for
/// each training step. Nodes are appended in evaluation order, so every
/// node's inputs precede it.
class Tape {
 public:
  Var constant(Tensor value);
  /// Differentiable leaf that is not a model parameter.
  Var variable(Tensor value);
  /// Leaf bound to a ParamStore entry. Repeated calls with the same id return
  /// the same node, which is how weights are shared across graph branches.
  Var parameter(ParamId id, const Tensor& value);
  Var parameter(const ParamStore& store, ParamId id) { return parameter(id, store.value(id)); }
  /// Same value, no gradient flows back to the input.
  Var stop_gradient(Var x);

  /// Values produced by stop_gradient, in call order.
  const std::vector<Tensor>& detached_values() const { return detached_; }
  /// Makes the n-th stop_gradient call return replay[n] instead of its input's
  /// value. Finite-difference checks use this to hold detached targets fixed.
  void replay_detached(std::vector<Tensor> replay) { replay_ = std::move(replay); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_row(Var x, Var bias);
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var concat_cols(std::span<const Var> parts);
  /// Sum of all entries as a 1x1 tensor.
  Var sum(Var a);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  OpKind kind(Var v) const;
  std::span<const int> inputs(Var v) const;
  std::optional<ParamId> param_of(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  Gradients backward(Var loss) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<int> inputs;
    Tensor value;
    double factor = 0.0;
    long param = -1;
    bool requires_grad = false;
  };

  Var push(OpKind kind, std::vector<int> inputs, Tensor value, double factor = 0.0);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
  std::vector<Tensor> detached_;
  std::vector<Tensor> replay_;
};

}  // namespace trivqa::nd
