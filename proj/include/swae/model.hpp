#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swae/graph.hpp"
#include "swae/rng.hpp"
#include "swae/tensor.hpp"

namespace swae {

inline constexpr double kLogvarClampLo = -10.0;
inline constexpr double kLogvarClampHi = 10.0;

// Markovian hierarchy layout: encoder n maps dim(z_{n-1}) -> dim(z_n) with
// z_0 = x, decoder n maps dim(z_n) -> dim(z_{n-1}).
struct HierarchySpec {
  int n_layers = 0;
  std::vector<int> latent_dims;
  int data_dim = 0;
  std::vector<int> hidden_units;  // width of the two hidden layers, per layer
  bool deterministic_bottom = true;

  void validate() const;
  int layer_input_dim(int n) const;   // dim(z_{n-1}), 1-based n
  int layer_output_dim(int n) const;  // dim(z_n)
  bool operator==(const HierarchySpec&) const = default;

  static HierarchySpec mnist_preset();
};

struct LinearLayer {
  Tensor weight;  // {in, out}
  Tensor bias;    // {out}
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;
};

// Two same-size hidden layers, batch-norm + ReLU after each, linear output.
// The hidden linears carry no bias: batch-norm subtracts the batch mean, so
// a pre-norm bias is an exactly-dead parameter (its shift role belongs to
// beta).
struct DenseNet {
  Tensor w0;  // {in, hidden}
  BatchNormLayer bn0;
  Tensor w1;  // {hidden, hidden}
  BatchNormLayer bn1;
  LinearLayer out;
};

// Diagonal-covariance Gaussian conditional; logvar_net is absent on the
// deterministic bottom decoder.
struct GaussianConditional {
  DenseNet mean_net;
  std::optional<DenseNet> logvar_net;
  bool deterministic() const { return !logvar_net.has_value(); }
};

struct StackedWaeModel {
  HierarchySpec spec;
  std::vector<GaussianConditional> encoders;  // q_1..q_N at index n-1
  std::vector<GaussianConditional> decoders;  // p_1..p_N at index n-1
};

// Fan-in-scaled Gaussian weights (std = sqrt(2/fan_in)), zero biases,
// gamma 1 / beta 0, unit running variance. Draw order is the parameter
// enumeration order, so one seed fixes every weight.
StackedWaeModel build_model(const HierarchySpec& spec, RngState& rng);

// Fixed enumeration order shared by init, the optimizer, checkpoints and
// gradchecks: encoders 1..N (mean then logvar net), then decoders 1..N.
void for_each_param(StackedWaeModel& model,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const StackedWaeModel& model,
                    const std::function<void(const std::string&, const Tensor&)>& fn);
void for_each_bn_state(StackedWaeModel& model,
                       const std::function<void(const std::string&, BatchNormState&)>& fn);
void for_each_bn_state(
    const StackedWaeModel& model,
    const std::function<void(const std::string&, const BatchNormState&)>& fn);
int64_t param_count(const StackedWaeModel& model);

// --- graph-level evaluation ------------------------------------------------

struct BoundLinear {
  Val weight, bias;
};
struct BoundBn {
  Val gamma, beta;
  BatchNormState* state = nullptr;
};
struct BoundDense {
  Val w0;
  BoundBn bn0;
  Val w1;
  BoundBn bn1;
  BoundLinear out;
};
struct BoundCond {
  BoundDense mean_net;
  std::optional<BoundDense> logvar_net;
};

// Model parameters bound into a graph as named grad leaves. `training`
// selects batch versus running statistics in every batch-norm.
struct BoundModel {
  const HierarchySpec* spec = nullptr;
  std::vector<BoundCond> encoders, decoders;
  bool training = false;
};

BoundModel bind_model(Graph& g, StackedWaeModel& model, bool training);

Val dense_forward(Graph& g, const BoundDense& net, Val x, bool training);

struct EncodeOut {
  Val sample, mean, logvar;
};

// z_n = mean + exp(logvar/2) * eps with one draw per data point; logvar is
// clamped to [-10, 10] before use.
EncodeOut encode_layer(Graph& g, const BoundModel& m, int n, Val input,
                       NoiseSource& noise);
std::vector<EncodeOut> encode_to(Graph& g, const BoundModel& m, Val x, int depth,
                                 NoiseSource& noise);

struct DecodeOut {
  Val output, mean;
  Val logvar;  // invalid on the deterministic bottom
};

// Layer 1 with a deterministic bottom returns sigmoid(mean_net(z_1))
// regardless of `sample`; other layers return the mean or a reparameterized
// draw from N(mean, diag exp(logvar)).
DecodeOut decode_layer(Graph& g, const BoundModel& m, int n, Val z,
                       NoiseSource& noise, bool sample);
Val decode_from(Graph& g, const BoundModel& m, int depth, Val z,
                NoiseSource& noise, bool sample_intermediate);

// z_N ~ N(0, I) sampled down through decoders N..2. Shared by sample_prior
// and the standard-WAE implicit prior, so the two consume noise identically.
Val prior_to_z1(Graph& g, const BoundModel& m, int count, NoiseSource& noise);

// --- tensor-level conveniences (own graph, eval-mode batch norm) -----------

Tensor sample_prior(StackedWaeModel& model, int count, RngState& rng);
Tensor encode_mean(StackedWaeModel& model, const Tensor& x, int depth);
Tensor decode_mean(StackedWaeModel& model, int depth, const Tensor& z);
Tensor reconstruct_mean(StackedWaeModel& model, const Tensor& x, int depth);

struct LayerEncodings {
  Tensor z_sample;  // sampled chain (aggregated posterior draws)
  Tensor z_mean;    // frozen-noise chain
  Tensor logvar;    // clamped logvar of the sampled chain
};
std::vector<LayerEncodings> encode_diagnostics(StackedWaeModel& model,
                                               const Tensor& x, RngState& rng);

}  // namespace swae
