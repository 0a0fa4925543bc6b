#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "swae/tensor.hpp"

namespace swae {

// Handle to a node of a Graph.
struct Val {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class OpKind {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kAddBias,
  kRelu,
  kSigmoid,
  kExp,
  kLog,
  kSquare,
  kAbs,
  kSum,
  kMean,
  kScale,
  kReciprocal,
  kPairwiseSqdist,
  kBatchNorm,
};

const char* op_name(OpKind kind);

// Running batch-norm statistics. Owned by the model; graphs reference them
// and update them only while recording in training mode.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  static constexpr double kMomentum = 0.9;
  static constexpr double kEpsilon = 1e-5;
  BatchNormState() = default;
  explicit BatchNormState(int dim)
      : running_mean(Tensor::zeros({dim})), running_var(Tensor::full({dim}, 1.0)) {}
};

// Reverse-mode tape over dense tensors. Recording an op executes it
// eagerly; forward()/replay() re-execute the recorded program on current
// leaf values, bit-for-bit. All reductions and gradient accumulations run
// in fixed ascending-index order.
class Graph {
 public:
  // Named leaves participate in forward(map) replay and gradcheck.
  Val leaf(const Tensor& t, const std::string& name = {});
  // Unnamed non-grad leaf (noise draws, masks, clamp bounds).
  Val constant(Tensor t);

  Val matmul(Val a, Val b);
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);
  Val add_bias(Val x, Val bias);
  Val relu(Val x);
  Val sigmoid(Val x);
  Val exp(Val x);
  Val log(Val x);
  Val square(Val x);
  Val abs(Val x);
  Val sum(Val x);
  Val mean(Val x);
  Val scale(Val x, double factor);
  Val reciprocal(Val x);
  // D[i,j] = sum_k (a[i,k] - b[j,k])^2
  Val pairwise_sqdist(Val a, Val b);
  Val batchnorm(Val x, Val gamma, Val beta, BatchNormState* state, bool training);

  const Tensor& value(Val v) const;
  double scalar_value(Val v) const;

  // Replays the recorded program after substituting the supplied leaf
  // values. Every named leaf must be supplied with its recorded shape and
  // finite entries; unnamed constants keep their recorded values.
  void forward(const std::map<std::string, Tensor>& leaves);
  void replay();
  void set_leaf(Val leaf, const Tensor& t);
  void poke_leaf(Val leaf, int64_t index, double value);
  double peek_leaf(Val leaf, int64_t index) const;

  // Seeds d(output)/d(output) = 1 and accumulates into every grad-requiring
  // ancestor in reverse topological (= reverse insertion) order. Output
  // must be scalar and values must be valid (forward not failed/stale).
  void backward(Val output);

  bool has_grad(Val v) const;
  const std::vector<double>& grad(Val v) const;
  Tensor grad_tensor(Val v) const;

  Val named_leaf(const std::string& name) const;
  std::vector<std::pair<std::string, Val>> named_leaves() const;
  int size() const { return static_cast<int>(nodes_.size()); }
  bool values_valid() const { return values_valid_; }

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::array<int, 3> in{-1, -1, -1};
    int n_in = 0;
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    double factor = 0.0;  // kScale
    std::string name;     // named leaves
    BatchNormState* bn_state = nullptr;
    bool bn_training = false;
    std::vector<double> bn_mean, bn_invstd;  // cached by exec for backward
  };

  Val record(OpKind kind, std::initializer_list<Val> inputs, Tensor value);
  void exec(int id, bool recording);
  void accumulate(int id);  // backward step for one node
  std::vector<double>& grad_buffer(int id, int64_t numel);
  const Node& node(Val v) const;
  Node& node(Val v);

  [[noreturn]] void fail(int id, const std::string& what) const;

  std::vector<Node> nodes_;
  std::map<std::string, int> leaf_ids_;
  bool values_valid_ = true;
  bool grads_valid_ = false;
};

// clamp(x, lo, hi) assembled from relu primitives; gradient is 1 strictly
// inside the interval and 0 outside.
Val clamp(Graph& g, Val x, double lo, double hi);

struct GradcheckEntry {
  std::string leaf;
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central-difference check of every grad-requiring named leaf of an
// already-recorded graph against `output`. The graph is replayed around
// each perturbed entry, so constants (noise draws) stay fixed. Relative
// error uses denominator max(|analytic|, |numeric|, 1e-8).
GradcheckReport gradcheck_graph(Graph& g, Val output, double step, double tol);

// Same check for a graph built from the supplied named leaves.
GradcheckReport gradcheck(
    const std::function<Val(Graph&, const std::vector<Val>&)>& build,
    const std::vector<std::pair<std::string, Tensor>>& leaves, double step,
    double tol);

}  // namespace swae
