#include "trivqa/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trivqa::nd {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw std::invalid_argument("duplicate parameter block '" + name + "'");
  blocks_.push_back({std::move(name), std::move(value)});
  return blocks_.size() - 1;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.value.size();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name != other.blocks_[i].name || !(blocks_[i].value == other.blocks_[i].value)) return false;
  }
  return true;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::variable: return "variable";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::add_row: return "add_row";
    case OpKind::relu: return "relu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::log_softmax_rows: return "log_softmax_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::sum: return "sum";
  }
  return "?";
}

const Tensor* Gradients::of(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= node_grads_.size()) return nullptr;
  const auto& g = node_grads_[static_cast<std::size_t>(v.id)];
  return g ? &*g : nullptr;
}

const Tensor* Gradients::param(ParamId id) const {
  if (id >= param_nodes_.size() || param_nodes_[id] < 0) return nullptr;
  return of(Var{param_nodes_[id]});
}

ParamGrads Gradients::collect(const ParamStore& store) const {
  ParamGrads out;
  out.values.reserve(store.size());
  out.reached.reserve(store.size());
  for (ParamId id = 0; id < store.size(); ++id) {
    if (const Tensor* g = param(id)) {
      out.values.push_back(*g);
      out.reached.push_back(true);
    } else {
      out.values.emplace_back(store.value(id).shape(), 0.0);
      out.reached.push_back(false);
    }
  }
  return out;
}

Var Tape::push(OpKind kind, std::vector<int> inputs, Tensor value, double factor) {
  Node n{kind, std::move(inputs), std::move(value), factor, -1, false};
  for (int in : n.inputs) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in)].requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::constant(Tensor value) { return push(OpKind::constant, {}, std::move(value)); }

Var Tape::variable(Tensor value) {
  Var v = push(OpKind::variable, {}, std::move(value));
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::parameter(ParamId id, const Tensor& value) {
  if (id < param_nodes_.size() && param_nodes_[id] >= 0) return Var{param_nodes_[id]};
  if (param_nodes_.size() <= id) param_nodes_.resize(id + 1, -1);
  Var v = push(OpKind::parameter, {}, value);
  nodes_.back().requires_grad = true;
  nodes_.back().param = static_cast<long>(id);
  param_nodes_[id] = v.id;
  return v;
}

Var Tape::stop_gradient(Var x) {
  const std::size_t n = detached_.size();
  if (n < replay_.size()) {
    if (replay_[n].shape() != node(x).value.shape()) throw std::logic_error("stop_gradient replay shape mismatch");
    detached_.push_back(replay_[n]);
  } else {
    detached_.push_back(node(x).value);
  }
  return push(OpKind::constant, {}, detached_.back());
}

Var Tape::matmul(Var a, Var b) { return push(OpKind::matmul, {a.id, b.id}, nd::matmul(value(a), value(b))); }
Var Tape::add(Var a, Var b) { return push(OpKind::add, {a.id, b.id}, nd::add(value(a), value(b))); }
Var Tape::sub(Var a, Var b) { return push(OpKind::sub, {a.id, b.id}, nd::sub(value(a), value(b))); }
Var Tape::mul(Var a, Var b) { return push(OpKind::mul, {a.id, b.id}, nd::mul(value(a), value(b))); }
Var Tape::scale(Var a, double factor) { return push(OpKind::scale, {a.id}, nd::scale(value(a), factor), factor); }
Var Tape::add_row(Var x, Var bias) { return push(OpKind::add_row, {x.id, bias.id}, nd::add_row(value(x), value(bias))); }
Var Tape::relu(Var a) { return push(OpKind::relu, {a.id}, nd::relu(value(a))); }
Var Tape::softmax_rows(Var a) { return push(OpKind::softmax_rows, {a.id}, nd::softmax_rows(value(a))); }
Var Tape::log_softmax_rows(Var a) { return push(OpKind::log_softmax_rows, {a.id}, nd::log_softmax_rows(value(a))); }

Var Tape::concat_cols(std::span<const Var> parts) {
  std::vector<const Tensor*> values;
  std::vector<int> ids;
  for (Var p : parts) {
    values.push_back(&value(p));
    ids.push_back(p.id);
  }
  return push(OpKind::concat_cols, std::move(ids), nd::concat_cols(values));
}

Var Tape::sum(Var a) { return push(OpKind::sum, {a.id}, Tensor::scalar(nd::sum(value(a)))); }

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
OpKind Tape::kind(Var v) const { return node(v).kind; }
std::span<const int> Tape::inputs(Var v) const { return node(v).inputs; }

std::optional<ParamId> Tape::param_of(Var v) const {
  const auto& n = node(v);
  if (n.param < 0) return std::nullopt;
  return static_cast<ParamId>(n.param);
}

namespace {

void accumulate(std::optional<Tensor>& slot, const Tensor& g) {
  if (!slot) {
    slot = g;
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// dA = dC * B^T
Tensor matmul_grad_lhs(const Tensor& dc, const Tensor& b) {
  const std::size_t m = dc.rows(), n = dc.cols(), k = b.rows();
  Tensor out = Tensor::matrix(m, k);
  for (std::size_t i = 0; i < m; ++i) {
    auto drow = dc.row_view(i);
    for (std::size_t p = 0; p < k; ++p) {
      auto brow = b.row_view(p);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += drow[j] * brow[j];
      out(i, p) = s;
    }
  }
  return out;
}

// dB = A^T * dC
Tensor matmul_grad_rhs(const Tensor& a, const Tensor& dc) {
  const std::size_t m = a.rows(), k = a.cols(), n = dc.cols();
  Tensor out = Tensor::matrix(k, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto drow = dc.row_view(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      auto orow = out.row_view(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * drow[j];
    }
  }
  return out;
}

}  // namespace

Gradients Tape::backward(Var loss) const {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(root.value.shape()));
  }
  Gradients out;
  out.param_nodes_ = param_nodes_;
  auto& grads = out.node_grads_;
  grads.resize(nodes_.size());
  grads[static_cast<std::size_t>(loss.id)] = Tensor(root.value.shape(), 1.0);

  for (int idx = loss.id; idx >= 0; --idx) {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    auto& g_slot = grads[static_cast<std::size_t>(idx)];
    if (!g_slot || !n.requires_grad) continue;
    const Tensor& g = *g_slot;
    const auto in = [&](std::size_t k) -> const Node& { return nodes_[static_cast<std::size_t>(n.inputs[k])]; };
    const auto send = [&](std::size_t k, const Tensor& value) {
      if (in(k).requires_grad) accumulate(grads[static_cast<std::size_t>(n.inputs[k])], value);
    };

    switch (n.kind) {
      case OpKind::constant:
      case OpKind::variable:
      case OpKind::parameter:
        break;
      case OpKind::matmul:
        if (in(0).requires_grad) send(0, matmul_grad_lhs(g, in(1).value));
        if (in(1).requires_grad) send(1, matmul_grad_rhs(in(0).value, g));
        break;
      case OpKind::add:
        send(0, g);
        send(1, g);
        break;
      case OpKind::sub:
        send(0, g);
        if (in(1).requires_grad) send(1, nd::scale(g, -1.0));
        break;
      case OpKind::mul:
        if (in(0).requires_grad) send(0, nd::mul(g, in(1).value));
        if (in(1).requires_grad) send(1, nd::mul(g, in(0).value));
        break;
      case OpKind::scale:
        send(0, nd::scale(g, n.factor));
        break;
      case OpKind::add_row: {
        send(0, g);
        if (in(1).requires_grad) {
          Tensor gb(in(1).value.shape(), 0.0);
          auto dst = gb.data();
          for (std::size_t r = 0; r < g.rows(); ++r) {
            auto row = g.row_view(r);
            for (std::size_t c = 0; c < row.size(); ++c) dst[c] += row[c];
          }
          send(1, gb);
        }
        break;
      }
      case OpKind::relu: {
        // Subgradient at exactly zero is zero.
        Tensor gx = g;
        auto x = in(0).value.data();
        auto d = gx.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (!(x[i] > 0.0)) d[i] = 0.0;
        }
        send(0, gx);
        break;
      }
      case OpKind::softmax_rows: {
        // dx = y * (g - <g, y>) per row
        Tensor gx = n.value;
        for (std::size_t r = 0; r < gx.rows(); ++r) {
          auto y = n.value.row_view(r);
          auto gr = g.row_view(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < y.size(); ++c) dot += gr[c] * y[c];
          auto out_row = gx.row_view(r);
          for (std::size_t c = 0; c < y.size(); ++c) out_row[c] = y[c] * (gr[c] - dot);
        }
        send(0, gx);
        break;
      }
      case OpKind::log_softmax_rows: {
        // dx = g - softmax(x) * sum(g) per row
        Tensor gx = g;
        for (std::size_t r = 0; r < gx.rows(); ++r) {
          auto ls = n.value.row_view(r);
          auto gr = g.row_view(r);
          double total = 0.0;
          for (double v : gr) total += v;
          auto out_row = gx.row_view(r);
          for (std::size_t c = 0; c < ls.size(); ++c) out_row[c] = gr[c] - std::exp(ls[c]) * total;
        }
        send(0, gx);
        break;
      }
      case OpKind::concat_cols: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t w = in(k).value.cols();
          if (in(k).requires_grad) {
            Tensor part = Tensor::matrix(g.rows(), w);
            for (std::size_t r = 0; r < g.rows(); ++r) {
              auto src = g.row_view(r).subspan(offset, w);
              std::copy(src.begin(), src.end(), part.row_view(r).begin());
            }
            send(k, part);
          }
          offset += w;
        }
        break;
      }
      case OpKind::sum:
        send(0, Tensor(in(0).value.shape(), g.item()));
        break;
    }
  }
  return out;
}

}  // namespace trivqa::nd
