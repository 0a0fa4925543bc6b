#include "swae/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace swae {

std::vector<double> lambda_products(const LossWeights& weights,
                                    const HierarchySpec& spec) {
  const int N = spec.n_layers;
  std::vector<double> out(static_cast<size_t>(N) + 1, 0.0);
  switch (weights.schedule) {
    case Schedule::kExplicit: {
      if (static_cast<int>(weights.explicit_weights.size()) != N + 1) {
        throw std::invalid_argument("explicit weight list has " +
                                    std::to_string(weights.explicit_weights.size()) +
                                    " entries, need " + std::to_string(N + 1));
      }
      return weights.explicit_weights;
    }
    case Schedule::kMnist: {
      out[0] = 1.0;
      double prod = 1.0;
      for (int n = 1; n <= N - 1; ++n) {
        prod *= weights.lambda_rec;
        out[n] = prod / spec.latent_dims[n - 1];
      }
      out[N] = weights.lambda_match;
      return out;
    }
    case Schedule::kSvhnStyle: {
      out[0] = 1.0;
      double prod = 1.0;
      for (int n = 1; n <= N - 1; ++n) {
        prod *= weights.lambda_rec;
        out[n] = prod;
      }
      out[N] = weights.lambda_match;
      return out;
    }
    case Schedule::kCelebaStyle: {
      out[0] = 1.0;
      for (int n = 1; n <= N - 1; ++n) {
        out[n] = std::pow(weights.lambda_rec, (n - 1) / 3.0 + 1.0);
      }
      out[N] = weights.lambda_match;
      return out;
    }
  }
  throw std::logic_error("unknown schedule");
}

double logvar_penalty_weight(double lambda_sigma, int layer) {
  return lambda_sigma * std::exp(-static_cast<double>(layer - 1));
}

Val squared_euclidean_cost(Graph& g, Val a, Val b) {
  const Tensor& ta = g.value(a);
  if (!ta.same_shape(g.value(b))) {
    throw std::invalid_argument("squared_euclidean_cost shape mismatch: " +
                                shape_str(ta.shape) + " vs " + shape_str(g.value(b).shape));
  }
  const int batch = ta.rank() == 2 ? ta.shape[0] : 1;
  return g.scale(g.sum(g.square(g.sub(a, b))), 1.0 / batch);
}

Val analytic_gaussian_recon(Graph& g, Val target, Val mean, Val logvar) {
  const Tensor& t = g.value(target);
  if (!t.same_shape(g.value(mean)) || !t.same_shape(g.value(logvar))) {
    throw std::invalid_argument("analytic_gaussian_recon shape mismatch");
  }
  const int batch = t.rank() == 2 ? t.shape[0] : 1;
  Val diff = g.sum(g.square(g.sub(target, mean)));
  Val trace = g.sum(g.exp(logvar));
  return g.scale(g.add(diff, trace), 1.0 / batch);
}

namespace {

Tensor offdiag_mask(int n) {
  Tensor mask = Tensor::full({n, n}, 1.0);
  for (int i = 0; i < n; ++i) mask.at(i, i) = 0.0;
  return mask;
}

Val kernel_matrix(Graph& g, Val sqdist, const KernelSpec& kernel, double scale) {
  switch (kernel.kind) {
    case KernelSpec::Kind::kImq: {
      // C/(C+d) as 1/(1 + d/C)
      const Shape shape = g.value(sqdist).shape;
      Val ones = g.constant(Tensor::full(shape, 1.0));
      return g.reciprocal(g.add(g.scale(sqdist, 1.0 / scale), ones));
    }
    case KernelSpec::Kind::kRbf:
      return g.exp(g.scale(sqdist, -1.0 / scale));
  }
  throw std::logic_error("unknown kernel kind");
}

void check_mmd_inputs(const Tensor& xs, const Tensor& ys) {
  if (xs.rank() != 2 || ys.rank() != 2 || xs.shape[1] != ys.shape[1]) {
    throw std::invalid_argument("mmd sample sets must be rank-2 with equal dimension, got " +
                                shape_str(xs.shape) + " vs " + shape_str(ys.shape));
  }
  if (xs.shape[0] < 2 || ys.shape[0] < 2) {
    throw std::invalid_argument("mmd needs at least 2 samples per set");
  }
}

}  // namespace

Val mmd_divergence_g(Graph& g, Val xs, Val ys, const KernelSpec& kernel) {
  const Tensor& tx = g.value(xs);
  const Tensor& ty = g.value(ys);
  check_mmd_inputs(tx, ty);
  const int n = tx.shape[0], m = ty.shape[0];
  const double scale = kernel.resolve_scale(tx.shape[1]);

  Val kxx = kernel_matrix(g, g.pairwise_sqdist(xs, xs), kernel, scale);
  Val kyy = kernel_matrix(g, g.pairwise_sqdist(ys, ys), kernel, scale);
  Val kxy = kernel_matrix(g, g.pairwise_sqdist(xs, ys), kernel, scale);

  Val term_xx = g.scale(g.sum(g.mul(kxx, g.constant(offdiag_mask(n)))),
                        1.0 / (static_cast<double>(n) * (n - 1)));
  Val term_yy = g.scale(g.sum(g.mul(kyy, g.constant(offdiag_mask(m)))),
                        1.0 / (static_cast<double>(m) * (m - 1)));
  Val term_xy = g.scale(g.sum(kxy), -2.0 / (static_cast<double>(n) * m));
  return g.add(g.add(term_xx, term_yy), term_xy);
}

double mmd_divergence(const Tensor& xs, const Tensor& ys, const KernelSpec& kernel) {
  check_mmd_inputs(xs, ys);
  const int n = xs.shape[0], m = ys.shape[0], d = xs.shape[1];
  const double scale = kernel.resolve_scale(d);
  auto k = [&](const Tensor& a, int i, const Tensor& b, int j) {
    double dist = 0.0;
    for (int t = 0; t < d; ++t) {
      const double diff = a.at(i, t) - b.at(j, t);
      dist += diff * diff;
    }
    return kernel.kind == KernelSpec::Kind::kImq ? 1.0 / (1.0 + dist / scale)
                                                 : std::exp(-dist / scale);
  };
  double sum_xx = 0.0, sum_yy = 0.0, sum_xy = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) sum_xx += k(xs, i, xs, j);
    }
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) sum_yy += k(ys, i, ys, j);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) sum_xy += k(xs, i, ys, j);
  }
  return sum_xx / (static_cast<double>(n) * (n - 1)) +
         sum_yy / (static_cast<double>(m) * (m - 1)) -
         2.0 * sum_xy / (static_cast<double>(n) * m);
}

Val logvar_penalty(Graph& g, const std::vector<Val>& logvars, double lambda_sigma) {
  if (lambda_sigma == 0.0) return Val{};
  Val total{};
  for (size_t i = 0; i < logvars.size(); ++i) {
    const Tensor& lv = g.value(logvars[i]);
    const int batch = lv.rank() == 2 ? lv.shape[0] : 1;
    const double w = logvar_penalty_weight(lambda_sigma, static_cast<int>(i) + 1);
    Val term = g.scale(g.sum(g.abs(logvars[i])), w / batch);
    total = total.valid() ? g.add(total, term) : term;
  }
  return total;
}

namespace {

void check_loss_batch(const Graph& g, Val x, const BoundModel& m) {
  const Tensor& tx = g.value(x);
  if (tx.rank() != 2 || tx.shape[1] != m.spec->data_dim) {
    throw std::invalid_argument("loss input must be batch x data_dim, got " +
                                shape_str(tx.shape));
  }
  if (tx.shape[0] < 2) {
    throw std::invalid_argument("loss needs batch size >= 2 (MMD estimator)");
  }
}

// total = sum_n w_n * recon_n + w_div * divergence (+ penalty), left fold.
// The breakdown mirrors the same fold so its weighted-sum identity holds to
// rounding error.
LossResult assemble_total(Graph& g, const std::vector<Val>& recon_vals,
                          const std::vector<double>& weights, Val divergence,
                          Val penalty) {
  LossResult result;
  const size_t n_recon = recon_vals.size();
  Val total = g.scale(recon_vals[0], weights[0]);
  for (size_t n = 1; n < n_recon; ++n) {
    total = g.add(total, g.scale(recon_vals[n], weights[n]));
  }
  total = g.add(total, g.scale(divergence, weights[n_recon]));
  if (penalty.valid()) total = g.add(total, penalty);

  for (Val v : recon_vals) result.breakdown.recon_terms.push_back(g.scalar_value(v));
  result.breakdown.divergence = g.scalar_value(divergence);
  result.breakdown.penalty = penalty.valid() ? g.scalar_value(penalty) : 0.0;
  result.breakdown.effective_weights = weights;
  result.breakdown.total = g.scalar_value(total);
  result.total = total;
  return result;
}

}  // namespace

LossResult stacked_wae_loss(Graph& g, const BoundModel& m, Val x,
                            const LossWeights& weights, const KernelSpec& kernel,
                            NoiseSource& noise) {
  check_loss_batch(g, x, m);
  const int N = m.spec->n_layers;
  const int batch = g.value(x).shape[0];
  const std::vector<double> w = lambda_products(weights, *m.spec);

  auto chain = encode_to(g, m, x, N, noise);

  std::vector<Val> recon_vals;
  recon_vals.reserve(static_cast<size_t>(N));
  // n = 0: data-space transport cost through the bottom decoder
  DecodeOut bottom = decode_layer(g, m, 1, chain[0].sample, noise, /*sample=*/false);
  if (m.spec->deterministic_bottom) {
    recon_vals.push_back(squared_euclidean_cost(g, x, bottom.output));
  } else {
    recon_vals.push_back(analytic_gaussian_recon(g, x, bottom.mean, bottom.logvar));
  }
  // n = 1..N-1: drawn z_n against decoder (n+1)'s Gaussian expectation
  for (int n = 1; n <= N - 1; ++n) {
    DecodeOut dec = decode_layer(g, m, n + 1, chain[n].sample, noise, /*sample=*/false);
    recon_vals.push_back(analytic_gaussian_recon(g, chain[n - 1].sample, dec.mean, dec.logvar));
  }

  Val prior = g.constant(noise.normal(batch, m.spec->layer_output_dim(N)));
  Val divergence = mmd_divergence_g(g, chain[N - 1].sample, prior, kernel);

  std::vector<Val> logvars;
  for (const EncodeOut& e : chain) logvars.push_back(e.logvar);
  Val penalty = logvar_penalty(g, logvars, weights.lambda_sigma);

  return assemble_total(g, recon_vals, w, divergence, penalty);
}

LossResult standard_wae_loss(Graph& g, const BoundModel& m, Val x, double lambda_1,
                             const KernelSpec& kernel, NoiseSource& noise) {
  check_loss_batch(g, x, m);
  const int batch = g.value(x).shape[0];

  EncodeOut enc = encode_layer(g, m, 1, x, noise);
  DecodeOut bottom = decode_layer(g, m, 1, enc.sample, noise, /*sample=*/false);
  std::vector<Val> recon_vals;
  if (m.spec->deterministic_bottom) {
    recon_vals.push_back(squared_euclidean_cost(g, x, bottom.output));
  } else {
    recon_vals.push_back(analytic_gaussian_recon(g, x, bottom.mean, bottom.logvar));
  }

  Val prior_z1 = prior_to_z1(g, m, batch, noise);
  Val divergence = mmd_divergence_g(g, enc.sample, prior_z1, kernel);

  return assemble_total(g, recon_vals, {1.0, lambda_1}, divergence, Val{});
}

}  // namespace swae
