#include "swae/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace swae {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kAbs: return "abs";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kScale: return "scale";
    case OpKind::kReciprocal: return "reciprocal";
    case OpKind::kPairwiseSqdist: return "pairwise_sqdist";
    case OpKind::kBatchNorm: return "batchnorm";
  }
  return "?";
}

void Graph::fail(int id, const std::string& what) const {
  std::string op = id >= 0 && id < size() ? op_name(nodes_[id].kind) : "?";
  throw std::runtime_error("graph node " + std::to_string(id) + " (" + op +
                           "): " + what);
}

const Graph::Node& Graph::node(Val v) const {
  if (!v.valid() || v.id >= size()) {
    throw std::invalid_argument("invalid graph value handle");
  }
  return nodes_[v.id];
}

Graph::Node& Graph::node(Val v) {
  return const_cast<Node&>(static_cast<const Graph*>(this)->node(v));
}

Val Graph::leaf(const Tensor& t, const std::string& name) {
  shape_numel(t.shape);  // validates extents
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = t;
  n.requires_grad = t.requires_grad;
  n.name = name;
  nodes_.push_back(std::move(n));
  int id = size() - 1;
  if (!name.empty()) {
    if (!leaf_ids_.emplace(name, id).second) {
      throw std::invalid_argument("duplicate leaf name '" + name + "'");
    }
  }
  grads_valid_ = false;
  return Val{id};
}

Val Graph::constant(Tensor t) {
  t.requires_grad = false;
  return leaf(t);
}

Val Graph::record(OpKind kind, std::initializer_list<Val> inputs, Tensor value) {
  Node n;
  n.kind = kind;
  for (Val in : inputs) {
    node(in);  // validates
    n.in[n.n_in++] = in.id;
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  int id = size() - 1;
  exec(id, /*recording=*/true);
  grads_valid_ = false;
  return Val{id};
}

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(what) + " requires a rank-2 tensor, got " +
                                shape_str(t.shape));
  }
}

}  // namespace

Val Graph::matmul(Val a, Val b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_rank2(ta, "matmul");
  require_rank2(tb, "matmul");
  if (ta.shape[1] != tb.shape[0]) {
    throw std::invalid_argument("matmul inner dimensions differ: " +
                                shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  return record(OpKind::kMatmul, {a, b}, Tensor({ta.shape[0], tb.shape[1]}));
}

Val Graph::add(Val a, Val b) {
  if (!node(a).value.same_shape(node(b).value)) {
    throw std::invalid_argument("add shape mismatch: " + shape_str(node(a).value.shape) +
                                " vs " + shape_str(node(b).value.shape));
  }
  return record(OpKind::kAdd, {a, b}, Tensor(node(a).value.shape));
}

Val Graph::sub(Val a, Val b) {
  if (!node(a).value.same_shape(node(b).value)) {
    throw std::invalid_argument("sub shape mismatch: " + shape_str(node(a).value.shape) +
                                " vs " + shape_str(node(b).value.shape));
  }
  return record(OpKind::kSub, {a, b}, Tensor(node(a).value.shape));
}

Val Graph::mul(Val a, Val b) {
  if (!node(a).value.same_shape(node(b).value)) {
    throw std::invalid_argument("mul shape mismatch: " + shape_str(node(a).value.shape) +
                                " vs " + shape_str(node(b).value.shape));
  }
  return record(OpKind::kMul, {a, b}, Tensor(node(a).value.shape));
}

Val Graph::add_bias(Val x, Val bias) {
  const Tensor& tx = node(x).value;
  const Tensor& tb = node(bias).value;
  require_rank2(tx, "add_bias");
  if (tb.rank() != 1 || tb.shape[0] != tx.shape[1]) {
    throw std::invalid_argument("add_bias needs bias shaped {" +
                                std::to_string(tx.shape[1]) + "}, got " +
                                shape_str(tb.shape));
  }
  return record(OpKind::kAddBias, {x, bias}, Tensor(tx.shape));
}

Val Graph::relu(Val x) { return record(OpKind::kRelu, {x}, Tensor(node(x).value.shape)); }
Val Graph::sigmoid(Val x) { return record(OpKind::kSigmoid, {x}, Tensor(node(x).value.shape)); }
Val Graph::exp(Val x) { return record(OpKind::kExp, {x}, Tensor(node(x).value.shape)); }
Val Graph::log(Val x) { return record(OpKind::kLog, {x}, Tensor(node(x).value.shape)); }
Val Graph::square(Val x) { return record(OpKind::kSquare, {x}, Tensor(node(x).value.shape)); }
Val Graph::abs(Val x) { return record(OpKind::kAbs, {x}, Tensor(node(x).value.shape)); }
Val Graph::sum(Val x) { return record(OpKind::kSum, {x}, Tensor({1})); }
Val Graph::mean(Val x) { return record(OpKind::kMean, {x}, Tensor({1})); }

Val Graph::scale(Val x, double factor) {
  Val v = record(OpKind::kScale, {x}, Tensor(node(x).value.shape));
  // record() executed with factor 0; set and re-exec
  nodes_[v.id].factor = factor;
  exec(v.id, /*recording=*/true);
  return v;
}

Val Graph::reciprocal(Val x) {
  return record(OpKind::kReciprocal, {x}, Tensor(node(x).value.shape));
}

Val Graph::pairwise_sqdist(Val a, Val b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_rank2(ta, "pairwise_sqdist");
  require_rank2(tb, "pairwise_sqdist");
  if (ta.shape[1] != tb.shape[1]) {
    throw std::invalid_argument("pairwise_sqdist feature dimensions differ: " +
                                shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  return record(OpKind::kPairwiseSqdist, {a, b}, Tensor({ta.shape[0], tb.shape[0]}));
}

Val Graph::batchnorm(Val x, Val gamma, Val beta, BatchNormState* state, bool training) {
  const Tensor& tx = node(x).value;
  require_rank2(tx, "batchnorm");
  int d = tx.shape[1];
  auto check_vec = [&](Val v, const char* what) {
    const Tensor& t = node(v).value;
    if (t.rank() != 1 || t.shape[0] != d) {
      throw std::invalid_argument(std::string("batchnorm ") + what + " needs shape {" +
                                  std::to_string(d) + "}, got " + shape_str(t.shape));
    }
  };
  check_vec(gamma, "gamma");
  check_vec(beta, "beta");
  if (state == nullptr || state->running_mean.numel() != d ||
      state->running_var.numel() != d) {
    throw std::invalid_argument("batchnorm state missing or of wrong dimension");
  }
  Node n;
  n.kind = OpKind::kBatchNorm;
  n.in = {x.id, gamma.id, beta.id};
  n.n_in = 3;
  n.requires_grad = nodes_[x.id].requires_grad || nodes_[gamma.id].requires_grad ||
                    nodes_[beta.id].requires_grad;
  n.value = Tensor(tx.shape);
  n.bn_state = state;
  n.bn_training = training;
  nodes_.push_back(std::move(n));
  int id = size() - 1;
  exec(id, /*recording=*/true);
  grads_valid_ = false;
  return Val{id};
}

void Graph::exec(int id, bool recording) {
  Node& n = nodes_[id];
  auto in = [&](int k) -> const Tensor& { return nodes_[n.in[k]].value; };
  std::vector<double>& out = n.value.data;

  switch (n.kind) {
    case OpKind::kLeaf:
      break;
    case OpKind::kMatmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const int rows = a.shape[0], inner = a.shape[1], cols = b.shape[1];
      const double* pa = a.data.data();
      const double* pb = b.data.data();
      double* pc = out.data();
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(rows) * inner * cols > 1 << 15)
      for (int i = 0; i < rows; ++i) {
        double* ci = pc + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) ci[j] = 0.0;
        const double* ai = pa + static_cast<size_t>(i) * inner;
        for (int k = 0; k < inner; ++k) {
          const double aik = ai[k];
          const double* bk = pb + static_cast<size_t>(k) * cols;
          for (int j = 0; j < cols; ++j) ci[j] += aik * bk[j];
        }
      }
      break;
    }
    case OpKind::kAdd: {
      const auto& a = in(0).data;
      const auto& b = in(1).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
      break;
    }
    case OpKind::kSub: {
      const auto& a = in(0).data;
      const auto& b = in(1).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
      break;
    }
    case OpKind::kMul: {
      const auto& a = in(0).data;
      const auto& b = in(1).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
      break;
    }
    case OpKind::kAddBias: {
      const Tensor& x = in(0);
      const auto& bias = in(1).data;
      const int rows = x.shape[0], cols = x.shape[1];
      for (int i = 0; i < rows; ++i) {
        const double* xi = x.data.data() + static_cast<size_t>(i) * cols;
        double* oi = out.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) oi[j] = xi[j] + bias[j];
      }
      break;
    }
    case OpKind::kRelu: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    }
    case OpKind::kSigmoid: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
      break;
    }
    case OpKind::kExp: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
      break;
    }
    case OpKind::kLog: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(a[i]);
      break;
    }
    case OpKind::kSquare: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] * a[i];
      break;
    }
    case OpKind::kAbs: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a[i]);
      break;
    }
    case OpKind::kSum: {
      const auto& a = in(0).data;
      double acc = 0.0;
      for (double v : a) acc += v;
      out[0] = acc;
      break;
    }
    case OpKind::kMean: {
      const auto& a = in(0).data;
      double acc = 0.0;
      for (double v : a) acc += v;
      out[0] = acc / static_cast<double>(a.size());
      break;
    }
    case OpKind::kScale: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] * n.factor;
      break;
    }
    case OpKind::kReciprocal: {
      const auto& a = in(0).data;
      for (size_t i = 0; i < out.size(); ++i) {
        if (a[i] == 0.0) fail(id, "reciprocal of zero entry");
        out[i] = 1.0 / a[i];
      }
      break;
    }
    case OpKind::kPairwiseSqdist: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const int na = a.shape[0], nb = b.shape[0], d = a.shape[1];
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(na) * nb * d > 1 << 15)
      for (int i = 0; i < na; ++i) {
        const double* ai = a.data.data() + static_cast<size_t>(i) * d;
        double* oi = out.data() + static_cast<size_t>(i) * nb;
        for (int j = 0; j < nb; ++j) {
          const double* bj = b.data.data() + static_cast<size_t>(j) * d;
          double acc = 0.0;
          for (int k = 0; k < d; ++k) {
            const double diff = ai[k] - bj[k];
            acc += diff * diff;
          }
          oi[j] = acc;
        }
      }
      break;
    }
    case OpKind::kBatchNorm: {
      const Tensor& x = in(0);
      const auto& gamma = in(1).data;
      const auto& beta = in(2).data;
      const int rows = x.shape[0], d = x.shape[1];
      n.bn_mean.assign(d, 0.0);
      n.bn_invstd.assign(d, 0.0);
      if (n.bn_training) {
        std::vector<double> var(d, 0.0);
        for (int j = 0; j < d; ++j) {
          double m = 0.0;
          for (int i = 0; i < rows; ++i) m += x.at(i, j);
          m /= rows;
          double v = 0.0;
          for (int i = 0; i < rows; ++i) {
            const double c = x.at(i, j) - m;
            v += c * c;
          }
          v /= rows;
          n.bn_mean[j] = m;
          var[j] = v;
          n.bn_invstd[j] = 1.0 / std::sqrt(v + BatchNormState::kEpsilon);
        }
        if (recording) {
          auto& rm = n.bn_state->running_mean.data;
          auto& rv = n.bn_state->running_var.data;
          for (int j = 0; j < d; ++j) {
            rm[j] = BatchNormState::kMomentum * rm[j] +
                    (1.0 - BatchNormState::kMomentum) * n.bn_mean[j];
            rv[j] = BatchNormState::kMomentum * rv[j] +
                    (1.0 - BatchNormState::kMomentum) * var[j];
          }
        }
      } else {
        const auto& rm = n.bn_state->running_mean.data;
        const auto& rv = n.bn_state->running_var.data;
        for (int j = 0; j < d; ++j) {
          n.bn_mean[j] = rm[j];
          n.bn_invstd[j] = 1.0 / std::sqrt(rv[j] + BatchNormState::kEpsilon);
        }
      }
      for (int i = 0; i < rows; ++i) {
        const double* xi = x.data.data() + static_cast<size_t>(i) * d;
        double* oi = out.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          oi[j] = gamma[j] * ((xi[j] - n.bn_mean[j]) * n.bn_invstd[j]) + beta[j];
        }
      }
      break;
    }
  }
}

const Tensor& Graph::value(Val v) const { return node(v).value; }

double Graph::scalar_value(Val v) const {
  const Tensor& t = node(v).value;
  if (t.numel() != 1) {
    throw std::invalid_argument("scalar_value on tensor " + shape_str(t.shape));
  }
  return t.data[0];
}

Val Graph::named_leaf(const std::string& name) const {
  auto it = leaf_ids_.find(name);
  if (it == leaf_ids_.end()) {
    throw std::invalid_argument("graph has no leaf named '" + name + "'");
  }
  return Val{it->second};
}

void Graph::set_leaf(Val leaf, const Tensor& t) {
  Node& n = node(leaf);
  if (n.kind != OpKind::kLeaf) fail(leaf.id, "not a leaf");
  if (t.shape != n.value.shape) {
    fail(leaf.id, "leaf shape mismatch: recorded " + shape_str(n.value.shape) +
                      ", supplied " + shape_str(t.shape));
  }
  n.value.data = t.data;
  grads_valid_ = false;
}

void Graph::poke_leaf(Val leaf, int64_t index, double value) {
  Node& n = node(leaf);
  if (n.kind != OpKind::kLeaf) fail(leaf.id, "not a leaf");
  n.value.data.at(static_cast<size_t>(index)) = value;
  grads_valid_ = false;
}

double Graph::peek_leaf(Val leaf, int64_t index) const {
  return node(leaf).value.data.at(static_cast<size_t>(index));
}

void Graph::forward(const std::map<std::string, Tensor>& leaves) {
  values_valid_ = false;
  for (const auto& [name, tensor] : leaves) {
    auto it = leaf_ids_.find(name);
    if (it == leaf_ids_.end()) {
      throw std::invalid_argument("forward: unknown leaf '" + name + "'");
    }
    if (!tensor.finite()) {
      throw std::invalid_argument("forward: leaf '" + name + "' has non-finite entries");
    }
    set_leaf(Val{it->second}, tensor);
  }
  for (const auto& [name, id] : leaf_ids_) {
    if (!leaves.count(name)) {
      throw std::invalid_argument("forward: leaf '" + name + "' not supplied");
    }
  }
  replay();
}

void Graph::replay() {
  values_valid_ = false;
  for (int id = 0; id < size(); ++id) exec(id, /*recording=*/false);
  values_valid_ = true;
  grads_valid_ = false;
}

std::vector<double>& Graph::grad_buffer(int id, int64_t numel) {
  auto& g = nodes_[id].grad;
  if (g.empty()) g.assign(static_cast<size_t>(numel), 0.0);
  return g;
}

void Graph::backward(Val output) {
  const Node& out = node(output);
  if (!values_valid_) {
    throw std::runtime_error("backward before a successful forward pass");
  }
  if (out.value.numel() != 1) {
    throw std::invalid_argument("backward output must be scalar, got " +
                                shape_str(out.value.shape));
  }
  for (Node& n : nodes_) n.grad.clear();
  grad_buffer(output.id, 1)[0] = 1.0;
  for (int id = output.id; id >= 0; --id) {
    if (nodes_[id].grad.empty() || !nodes_[id].requires_grad) continue;
    accumulate(id);
  }
  grads_valid_ = true;
}

void Graph::accumulate(int id) {
  Node& n = nodes_[id];
  const std::vector<double>& g = n.grad;
  auto in_val = [&](int k) -> const Tensor& { return nodes_[n.in[k]].value; };
  auto wants = [&](int k) { return nodes_[n.in[k]].requires_grad; };
  auto buf = [&](int k) -> std::vector<double>& {
    return grad_buffer(n.in[k], in_val(k).numel());
  };

  switch (n.kind) {
    case OpKind::kLeaf:
      break;
    case OpKind::kMatmul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      const int rows = a.shape[0], inner = a.shape[1], cols = b.shape[1];
      if (wants(0)) {
        auto& da = buf(0);
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(rows) * inner * cols > 1 << 15)
        for (int i = 0; i < rows; ++i) {
          const double* gi = g.data() + static_cast<size_t>(i) * cols;
          double* dai = da.data() + static_cast<size_t>(i) * inner;
          for (int k = 0; k < inner; ++k) {
            const double* bk = b.data.data() + static_cast<size_t>(k) * cols;
            double acc = 0.0;
            for (int j = 0; j < cols; ++j) acc += gi[j] * bk[j];
            dai[k] += acc;
          }
        }
      }
      if (wants(1)) {
        auto& db = buf(1);
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(rows) * inner * cols > 1 << 15)
        for (int k = 0; k < inner; ++k) {
          double* dbk = db.data() + static_cast<size_t>(k) * cols;
          for (int i = 0; i < rows; ++i) {
            const double aik = a.data[static_cast<size_t>(i) * inner + k];
            const double* gi = g.data() + static_cast<size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) dbk[j] += aik * gi[j];
          }
        }
      }
      break;
    }
    case OpKind::kAdd: {
      for (int k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        auto& d = buf(k);
        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      break;
    }
    case OpKind::kSub: {
      if (wants(0)) {
        auto& d = buf(0);
        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (wants(1)) {
        auto& d = buf(1);
        for (size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
      }
      break;
    }
    case OpKind::kMul: {
      const auto& a = in_val(0).data;
      const auto& b = in_val(1).data;
      if (wants(0)) {
        auto& d = buf(0);
        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * b[i];
      }
      if (wants(1)) {
        auto& d = buf(1);
        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * a[i];
      }
      break;
    }
    case OpKind::kAddBias: {
      const int rows = in_val(0).shape[0], cols = in_val(0).shape[1];
      if (wants(0)) {
        auto& d = buf(0);
        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (wants(1)) {
        auto& d = buf(1);
        for (int j = 0; j < cols; ++j) {
          double acc = 0.0;
          for (int i = 0; i < rows; ++i) acc += g[static_cast<size_t>(i) * cols + j];
          d[j] += acc;
        }
      }
      break;
    }
    case OpKind::kRelu: {
      if (!wants(0)) break;
      const auto& a = in_val(0).data;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) {
        if (a[i] > 0.0) d[i] += g[i];
      }
      break;
    }
    case OpKind::kSigmoid: {
      if (!wants(0)) break;
      const auto& y = n.value.data;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case OpKind::kExp: {
      if (!wants(0)) break;
      const auto& y = n.value.data;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
      break;
    }
    case OpKind::kLog: {
      if (!wants(0)) break;
      const auto& a = in_val(0).data;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] / a[i];
      break;
    }
    case OpKind::kSquare: {
      if (!wants(0)) break;
      const auto& a = in_val(0).data;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * 2.0 * a[i];
      break;
    }
    case OpKind::kAbs: {
      if (!wants(0)) break;
      const auto& a = in_val(0).data;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) {
        if (a[i] > 0.0) {
          d[i] += g[i];
        } else if (a[i] < 0.0) {
          d[i] -= g[i];
        }
      }
      break;
    }
    case OpKind::kSum: {
      if (!wants(0)) break;
      auto& d = buf(0);
      const double s = g[0];
      for (double& v : d) v += s;
      break;
    }
    case OpKind::kMean: {
      if (!wants(0)) break;
      auto& d = buf(0);
      const double s = g[0] / static_cast<double>(d.size());
      for (double& v : d) v += s;
      break;
    }
    case OpKind::kScale: {
      if (!wants(0)) break;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.factor;
      break;
    }
    case OpKind::kReciprocal: {
      if (!wants(0)) break;
      const auto& y = n.value.data;
      auto& d = buf(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] -= g[i] * y[i] * y[i];
      break;
    }
    case OpKind::kPairwiseSqdist: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      const int na = a.shape[0], nb = b.shape[0], d = a.shape[1];
      if (wants(0)) {
        auto& da = buf(0);
        for (int i = 0; i < na; ++i) {
          const double* ai = a.data.data() + static_cast<size_t>(i) * d;
          double* dai = da.data() + static_cast<size_t>(i) * d;
          const double* gi = g.data() + static_cast<size_t>(i) * nb;
          for (int j = 0; j < nb; ++j) {
            const double* bj = b.data.data() + static_cast<size_t>(j) * d;
            const double gij2 = 2.0 * gi[j];
            for (int k = 0; k < d; ++k) dai[k] += gij2 * (ai[k] - bj[k]);
          }
        }
      }
      if (wants(1)) {
        auto& db = buf(1);
        for (int j = 0; j < nb; ++j) {
          const double* bj = b.data.data() + static_cast<size_t>(j) * d;
          double* dbj = db.data() + static_cast<size_t>(j) * d;
          for (int i = 0; i < na; ++i) {
            const double* ai = a.data.data() + static_cast<size_t>(i) * d;
            const double gij2 = 2.0 * g[static_cast<size_t>(i) * nb + j];
            for (int k = 0; k < d; ++k) dbj[k] += gij2 * (bj[k] - ai[k]);
          }
        }
      }
      break;
    }
    case OpKind::kBatchNorm: {
      const Tensor& x = in_val(0);
      const auto& gamma = in_val(1).data;
      const int rows = x.shape[0], d = x.shape[1];
      auto xhat = [&](int i, int j) {
        return (x.at(i, j) - n.bn_mean[j]) * n.bn_invstd[j];
      };
      if (wants(1)) {
        auto& dg = buf(1);
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int i = 0; i < rows; ++i) acc += g[static_cast<size_t>(i) * d + j] * xhat(i, j);
          dg[j] += acc;
        }
      }
      if (wants(2)) {
        auto& db = buf(2);
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int i = 0; i < rows; ++i) acc += g[static_cast<size_t>(i) * d + j];
          db[j] += acc;
        }
      }
      if (wants(0)) {
        auto& dx = buf(0);
        if (n.bn_training) {
          // d/dx through the batch statistics
          for (int j = 0; j < d; ++j) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int i = 0; i < rows; ++i) {
              const double dxh = g[static_cast<size_t>(i) * d + j] * gamma[j];
              sum_dxhat += dxh;
              sum_dxhat_xhat += dxh * xhat(i, j);
            }
            const double inv_n = 1.0 / rows;
            for (int i = 0; i < rows; ++i) {
              const double dxh = g[static_cast<size_t>(i) * d + j] * gamma[j];
              dx[static_cast<size_t>(i) * d + j] +=
                  n.bn_invstd[j] * (dxh - inv_n * sum_dxhat - inv_n * xhat(i, j) * sum_dxhat_xhat);
            }
          }
        } else {
          for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < d; ++j) {
              dx[static_cast<size_t>(i) * d + j] +=
                  g[static_cast<size_t>(i) * d + j] * gamma[j] * n.bn_invstd[j];
            }
          }
        }
      }
      break;
    }
  }
}

bool Graph::has_grad(Val v) const { return grads_valid_ && !node(v).grad.empty(); }

const std::vector<double>& Graph::grad(Val v) const {
  if (!grads_valid_) throw std::runtime_error("gradients requested before backward");
  const Node& n = node(v);
  if (n.grad.empty()) {
    throw std::runtime_error("node " + std::to_string(v.id) +
                             " received no gradient (not on the backward path)");
  }
  return n.grad;
}

Tensor Graph::grad_tensor(Val v) const {
  Tensor t(node(v).value.shape);
  t.data = grad(v);
  return t;
}

Val clamp(Graph& g, Val x, double lo, double hi) {
  const Shape shape = g.value(x).shape;  // copy: recording reallocates nodes
  Val c_lo = g.constant(Tensor::full(shape, lo));
  Val c_hi = g.constant(Tensor::full(shape, hi));
  return g.add(c_lo, g.sub(g.relu(g.sub(x, c_lo)), g.relu(g.sub(x, c_hi))));
}

std::vector<std::pair<std::string, Val>> Graph::named_leaves() const {
  std::vector<std::pair<std::string, Val>> out;
  out.reserve(leaf_ids_.size());
  for (const auto& [name, id] : leaf_ids_) out.emplace_back(name, Val{id});
  return out;
}

GradcheckReport gradcheck_graph(Graph& g, Val output, double step, double tol) {
  if (g.value(output).numel() != 1) {
    throw std::invalid_argument("gradcheck output must be a scalar");
  }
  if (!g.value(output).finite()) {
    throw std::runtime_error("gradcheck function produced a non-finite output");
  }
  g.backward(output);

  std::vector<std::pair<std::string, Val>> leaves;
  for (const auto& [name, val] : g.named_leaves()) {
    if (g.value(val).requires_grad) leaves.emplace_back(name, val);
  }
  // snapshot analytic gradients before any replay invalidates them
  std::vector<std::vector<double>> analytic_all(leaves.size());
  for (size_t li = 0; li < leaves.size(); ++li) {
    analytic_all[li] =
        g.has_grad(leaves[li].second)
            ? g.grad(leaves[li].second)
            : std::vector<double>(
                  static_cast<size_t>(g.value(leaves[li].second).numel()), 0.0);
  }

  GradcheckReport report;
  report.tol = tol;
  for (size_t li = 0; li < leaves.size(); ++li) {
    const Val leaf = leaves[li].second;
    const std::vector<double>& analytic = analytic_all[li];
    GradcheckEntry entry{leaves[li].first, 0.0};
    for (int64_t i = 0; i < g.value(leaf).numel(); ++i) {
      const double orig = g.peek_leaf(leaf, i);
      g.poke_leaf(leaf, i, orig + step);
      g.replay();
      const double f_plus = g.scalar_value(output);
      g.poke_leaf(leaf, i, orig - step);
      g.replay();
      const double f_minus = g.scalar_value(output);
      g.poke_leaf(leaf, i, orig);
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw std::runtime_error("gradcheck produced a non-finite perturbed output");
      }
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[static_cast<size_t>(i)];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(a - numeric) / denom);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  // leave values consistent with the unperturbed leaves
  g.replay();
  report.pass = report.max_rel_err < tol;
  return report;
}

GradcheckReport gradcheck(
    const std::function<Val(Graph&, const std::vector<Val>&)>& build,
    const std::vector<std::pair<std::string, Tensor>>& leaves, double step,
    double tol) {
  Graph g;
  std::vector<Val> vals;
  vals.reserve(leaves.size());
  for (const auto& [name, tensor] : leaves) vals.push_back(g.leaf(tensor, name));
  Val out = build(g, vals);
  return gradcheck_graph(g, out, step, tol);
}

}  // namespace swae
