#include "swae/model.hpp"

#include <cmath>
#include <stdexcept>

namespace swae {

void HierarchySpec::validate() const {
  if (n_layers < 1) throw std::invalid_argument("hierarchy needs n_layers >= 1");
  if (static_cast<int>(latent_dims.size()) != n_layers) {
    throw std::invalid_argument("latent_dims has " + std::to_string(latent_dims.size()) +
                                " entries for " + std::to_string(n_layers) + " layers");
  }
  if (static_cast<int>(hidden_units.size()) != n_layers) {
    throw std::invalid_argument("hidden_units has " + std::to_string(hidden_units.size()) +
                                " entries for " + std::to_string(n_layers) + " layers");
  }
  for (int d : latent_dims) {
    if (d < 1) throw std::invalid_argument("latent dimension must be >= 1");
  }
  for (int h : hidden_units) {
    if (h < 1) throw std::invalid_argument("hidden width must be >= 1");
  }
  if (data_dim < 1) throw std::invalid_argument("data_dim must be >= 1");
}

int HierarchySpec::layer_input_dim(int n) const {
  if (n < 1 || n > n_layers) {
    throw std::invalid_argument("layer index " + std::to_string(n) + " out of range 1.." +
                                std::to_string(n_layers));
  }
  return n == 1 ? data_dim : latent_dims[n - 2];
}

int HierarchySpec::layer_output_dim(int n) const {
  if (n < 1 || n > n_layers) {
    throw std::invalid_argument("layer index " + std::to_string(n) + " out of range 1.." +
                                std::to_string(n_layers));
  }
  return latent_dims[n - 1];
}

HierarchySpec HierarchySpec::mnist_preset() {
  HierarchySpec spec;
  spec.n_layers = 5;
  spec.latent_dims = {32, 16, 8, 4, 2};
  spec.hidden_units = {2048, 1024, 512, 256, 128};
  spec.data_dim = 784;
  spec.deterministic_bottom = true;
  return spec;
}

namespace {

Tensor init_weight(int in, int out, RngState& rng) {
  Tensor w({in, out});
  const double std = std::sqrt(2.0 / in);
  for (double& v : w.data) v = std * rng.normal();
  w.requires_grad = true;
  return w;
}

LinearLayer init_linear(int in, int out, RngState& rng) {
  LinearLayer l;
  l.weight = init_weight(in, out, rng);
  l.bias = Tensor::zeros({out});
  l.bias.requires_grad = true;
  return l;
}

BatchNormLayer init_bn(int dim) {
  BatchNormLayer bn;
  bn.gamma = Tensor::full({dim}, 1.0);
  bn.gamma.requires_grad = true;
  bn.beta = Tensor::zeros({dim});
  bn.beta.requires_grad = true;
  bn.state = BatchNormState(dim);
  return bn;
}

DenseNet init_dense(int in, int hidden, int out, RngState& rng) {
  DenseNet net;
  net.w0 = init_weight(in, hidden, rng);
  net.bn0 = init_bn(hidden);
  net.w1 = init_weight(hidden, hidden, rng);
  net.bn1 = init_bn(hidden);
  net.out = init_linear(hidden, out, rng);
  return net;
}

template <typename Model, typename Fn>
void walk_params(Model& model, const Fn& fn) {
  auto net = [&](const std::string& prefix, auto& d) {
    fn(prefix + ".W0", d.w0);
    fn(prefix + ".bn0.gamma", d.bn0.gamma);
    fn(prefix + ".bn0.beta", d.bn0.beta);
    fn(prefix + ".W1", d.w1);
    fn(prefix + ".bn1.gamma", d.bn1.gamma);
    fn(prefix + ".bn1.beta", d.bn1.beta);
    fn(prefix + ".W2", d.out.weight);
    fn(prefix + ".b2", d.out.bias);
  };
  auto cond = [&](const std::string& prefix, auto& c) {
    net(prefix + ".mean", c.mean_net);
    if (c.logvar_net) net(prefix + ".logvar", *c.logvar_net);
  };
  for (size_t i = 0; i < model.encoders.size(); ++i) {
    cond("enc" + std::to_string(i + 1), model.encoders[i]);
  }
  for (size_t i = 0; i < model.decoders.size(); ++i) {
    cond("dec" + std::to_string(i + 1), model.decoders[i]);
  }
}

}  // namespace

StackedWaeModel build_model(const HierarchySpec& spec, RngState& rng) {
  spec.validate();
  StackedWaeModel model;
  model.spec = spec;
  const int N = spec.n_layers;
  for (int n = 1; n <= N; ++n) {
    const int in = spec.layer_input_dim(n);
    const int out = spec.layer_output_dim(n);
    const int hidden = spec.hidden_units[n - 1];
    GaussianConditional enc;
    enc.mean_net = init_dense(in, hidden, out, rng);
    enc.logvar_net = init_dense(in, hidden, out, rng);
    model.encoders.push_back(std::move(enc));
  }
  for (int n = 1; n <= N; ++n) {
    const int in = spec.layer_output_dim(n);
    const int out = spec.layer_input_dim(n);
    const int hidden = spec.hidden_units[n - 1];
    GaussianConditional dec;
    dec.mean_net = init_dense(in, hidden, out, rng);
    if (!(n == 1 && spec.deterministic_bottom)) {
      dec.logvar_net = init_dense(in, hidden, out, rng);
    }
    model.decoders.push_back(std::move(dec));
  }
  return model;
}

void for_each_param(StackedWaeModel& model,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  walk_params(model, fn);
}

void for_each_param(const StackedWaeModel& model,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
  walk_params(model, fn);
}

namespace {

template <typename Model, typename Fn>
void walk_bn_states(Model& model, const Fn& fn) {
  auto net = [&](const std::string& prefix, auto& d) {
    fn(prefix + ".bn0", d.bn0.state);
    fn(prefix + ".bn1", d.bn1.state);
  };
  auto cond = [&](const std::string& prefix, auto& c) {
    net(prefix + ".mean", c.mean_net);
    if (c.logvar_net) net(prefix + ".logvar", *c.logvar_net);
  };
  for (size_t i = 0; i < model.encoders.size(); ++i) {
    cond("enc" + std::to_string(i + 1), model.encoders[i]);
  }
  for (size_t i = 0; i < model.decoders.size(); ++i) {
    cond("dec" + std::to_string(i + 1), model.decoders[i]);
  }
}

}  // namespace

void for_each_bn_state(StackedWaeModel& model,
                       const std::function<void(const std::string&, BatchNormState&)>& fn) {
  walk_bn_states(model, fn);
}

void for_each_bn_state(
    const StackedWaeModel& model,
    const std::function<void(const std::string&, const BatchNormState&)>& fn) {
  walk_bn_states(model, fn);
}

int64_t param_count(const StackedWaeModel& model) {
  int64_t n = 0;
  for_each_param(model, [&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

namespace {

BoundDense bind_dense(Graph& g, const std::string& prefix, DenseNet& net) {
  BoundDense b;
  b.w0 = g.leaf(net.w0, prefix + ".W0");
  b.bn0 = {g.leaf(net.bn0.gamma, prefix + ".bn0.gamma"),
           g.leaf(net.bn0.beta, prefix + ".bn0.beta"), &net.bn0.state};
  b.w1 = g.leaf(net.w1, prefix + ".W1");
  b.bn1 = {g.leaf(net.bn1.gamma, prefix + ".bn1.gamma"),
           g.leaf(net.bn1.beta, prefix + ".bn1.beta"), &net.bn1.state};
  b.out = {g.leaf(net.out.weight, prefix + ".W2"), g.leaf(net.out.bias, prefix + ".b2")};
  return b;
}

}  // namespace

BoundModel bind_model(Graph& g, StackedWaeModel& model, bool training) {
  BoundModel bound;
  bound.spec = &model.spec;
  bound.training = training;
  for (size_t i = 0; i < model.encoders.size(); ++i) {
    BoundCond c;
    const std::string prefix = "enc" + std::to_string(i + 1);
    c.mean_net = bind_dense(g, prefix + ".mean", model.encoders[i].mean_net);
    if (model.encoders[i].logvar_net) {
      c.logvar_net = bind_dense(g, prefix + ".logvar", *model.encoders[i].logvar_net);
    }
    bound.encoders.push_back(std::move(c));
  }
  for (size_t i = 0; i < model.decoders.size(); ++i) {
    BoundCond c;
    const std::string prefix = "dec" + std::to_string(i + 1);
    c.mean_net = bind_dense(g, prefix + ".mean", model.decoders[i].mean_net);
    if (model.decoders[i].logvar_net) {
      c.logvar_net = bind_dense(g, prefix + ".logvar", *model.decoders[i].logvar_net);
    }
    bound.decoders.push_back(std::move(c));
  }
  return bound;
}

Val dense_forward(Graph& g, const BoundDense& net, Val x, bool training) {
  Val h = g.relu(g.batchnorm(g.matmul(x, net.w0), net.bn0.gamma, net.bn0.beta,
                             net.bn0.state, training));
  h = g.relu(g.batchnorm(g.matmul(h, net.w1), net.bn1.gamma, net.bn1.beta,
                         net.bn1.state, training));
  return g.add_bias(g.matmul(h, net.out.weight), net.out.bias);
}

namespace {

void check_layer_index(const BoundModel& m, int n) {
  if (n < 1 || n > m.spec->n_layers) {
    throw std::invalid_argument("layer index " + std::to_string(n) + " out of range 1.." +
                                std::to_string(m.spec->n_layers));
  }
}

void check_batch_dim(const Graph& g, Val t, int want, const char* what) {
  const Tensor& v = g.value(t);
  if (v.rank() != 2 || v.shape[1] != want) {
    throw std::invalid_argument(std::string(what) + " expects batch of dimension " +
                                std::to_string(want) + ", got " + shape_str(v.shape));
  }
}

// mean + exp(logvar/2) * eps
Val reparameterize(Graph& g, Val mean, Val logvar, NoiseSource& noise) {
  const Tensor& m = g.value(mean);
  Val eps = g.constant(noise.normal(m.shape[0], m.shape[1]));
  return g.add(mean, g.mul(g.exp(g.scale(logvar, 0.5)), eps));
}

}  // namespace

EncodeOut encode_layer(Graph& g, const BoundModel& m, int n, Val input,
                       NoiseSource& noise) {
  check_layer_index(m, n);
  check_batch_dim(g, input, m.spec->layer_input_dim(n), "encode_layer");
  const BoundCond& enc = m.encoders[n - 1];
  Val mean = dense_forward(g, enc.mean_net, input, m.training);
  Val logvar = clamp(g, dense_forward(g, *enc.logvar_net, input, m.training),
                     kLogvarClampLo, kLogvarClampHi);
  Val sample = reparameterize(g, mean, logvar, noise);
  return {sample, mean, logvar};
}

std::vector<EncodeOut> encode_to(Graph& g, const BoundModel& m, Val x, int depth,
                                 NoiseSource& noise) {
  check_layer_index(m, depth);
  std::vector<EncodeOut> chain;
  Val current = x;
  for (int n = 1; n <= depth; ++n) {
    chain.push_back(encode_layer(g, m, n, current, noise));
    current = chain.back().sample;  // Markov: only the drawn sample moves up
  }
  return chain;
}

DecodeOut decode_layer(Graph& g, const BoundModel& m, int n, Val z,
                       NoiseSource& noise, bool sample) {
  check_layer_index(m, n);
  check_batch_dim(g, z, m.spec->layer_output_dim(n), "decode_layer");
  const BoundCond& dec = m.decoders[n - 1];
  if (!dec.logvar_net) {
    Val out = g.sigmoid(dense_forward(g, dec.mean_net, z, m.training));
    return {out, out, Val{}};
  }
  Val mean = dense_forward(g, dec.mean_net, z, m.training);
  Val logvar = clamp(g, dense_forward(g, *dec.logvar_net, z, m.training),
                     kLogvarClampLo, kLogvarClampHi);
  Val out = sample ? reparameterize(g, mean, logvar, noise) : mean;
  return {out, mean, logvar};
}

Val decode_from(Graph& g, const BoundModel& m, int depth, Val z,
                NoiseSource& noise, bool sample_intermediate) {
  check_layer_index(m, depth);
  Val current = z;
  for (int n = depth; n >= 1; --n) {
    current = decode_layer(g, m, n, current, noise, sample_intermediate).output;
  }
  return current;
}

Val prior_to_z1(Graph& g, const BoundModel& m, int count, NoiseSource& noise) {
  const int N = m.spec->n_layers;
  Val z = g.constant(noise.normal(count, m.spec->layer_output_dim(N)));
  for (int n = N; n >= 2; --n) {
    z = decode_layer(g, m, n, z, noise, /*sample=*/true).output;
  }
  return z;
}

Tensor sample_prior(StackedWaeModel& model, int count, RngState& rng) {
  if (count < 1) throw std::invalid_argument("sample_prior needs count >= 1");
  Graph g;
  BoundModel bound = bind_model(g, model, /*training=*/false);
  RngNoise noise(rng);
  Val z1 = prior_to_z1(g, bound, count, noise);
  Val x = decode_layer(g, bound, 1, z1, noise, /*sample=*/false).output;
  return g.value(x);
}

Tensor encode_mean(StackedWaeModel& model, const Tensor& x, int depth) {
  Graph g;
  BoundModel bound = bind_model(g, model, /*training=*/false);
  ZeroNoise noise;
  auto chain = encode_to(g, bound, g.constant(x), depth, noise);
  return g.value(chain.back().mean);
}

Tensor decode_mean(StackedWaeModel& model, int depth, const Tensor& z) {
  Graph g;
  BoundModel bound = bind_model(g, model, /*training=*/false);
  ZeroNoise noise;
  return g.value(decode_from(g, bound, depth, g.constant(z), noise, false));
}

Tensor reconstruct_mean(StackedWaeModel& model, const Tensor& x, int depth) {
  Graph g;
  BoundModel bound = bind_model(g, model, /*training=*/false);
  ZeroNoise noise;
  auto chain = encode_to(g, bound, g.constant(x), depth, noise);
  return g.value(decode_from(g, bound, depth, chain.back().mean, noise, false));
}

std::vector<LayerEncodings> encode_diagnostics(StackedWaeModel& model,
                                               const Tensor& x, RngState& rng) {
  Graph g;
  BoundModel bound = bind_model(g, model, /*training=*/false);
  RngNoise noise(rng);
  auto sampled = encode_to(g, bound, g.constant(x), model.spec.n_layers, noise);
  ZeroNoise zero;
  auto means = encode_to(g, bound, g.constant(x), model.spec.n_layers, zero);
  std::vector<LayerEncodings> out;
  for (int n = 0; n < model.spec.n_layers; ++n) {
    out.push_back({g.value(sampled[n].sample), g.value(means[n].mean),
                   g.value(sampled[n].logvar)});
  }
  return out;
}

}  // namespace swae
