#pragma once

#include <string>
#include <vector>

#include "swae/graph.hpp"
#include "swae/model.hpp"
#include "swae/rng.hpp"

namespace swae {

enum class Schedule { kMnist, kSvhnStyle, kCelebaStyle, kExplicit };

struct LossWeights {
  double lambda_rec = 0.01;
  double lambda_match = 1e-4;
  double lambda_sigma = 0.0;
  Schedule schedule = Schedule::kMnist;
  std::vector<double> explicit_weights;  // length N+1 when schedule is kExplicit
};

struct KernelSpec {
  enum class Kind { kImq, kRbf };
  Kind kind = Kind::kImq;
  double scale = 0.0;  // <= 0 resolves to 2 * d (unit prior variance)
  double resolve_scale(int dim) const { return scale > 0.0 ? scale : 2.0 * dim; }
};

struct LossBreakdown {
  std::vector<double> recon_terms;        // index 0 = data-space term
  double divergence = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  std::vector<double> effective_weights;  // recon weights then divergence weight
};

// Effective per-term weights [w_0 .. w_{N-1}, w_div]. The data-space term
// always carries weight 1.
std::vector<double> lambda_products(const LossWeights& weights,
                                    const HierarchySpec& spec);

// lambda_sigma * e^{-(layer-1)}, 1-based layer
double logvar_penalty_weight(double lambda_sigma, int layer);

// mean over the batch of the squared row distance (no per-dimension
// normalization; dimension scaling lives in the lambda schedule)
Val squared_euclidean_cost(Graph& g, Val a, Val b);

// closed form of E_{z ~ N(mean, diag exp(logvar))} ||target - z||^2,
// averaged over the batch
Val analytic_gaussian_recon(Graph& g, Val target, Val mean, Val logvar);

// Unbiased U-statistic MMD^2 between two sample sets (may go negative).
Val mmd_divergence_g(Graph& g, Val xs, Val ys, const KernelSpec& kernel);
double mmd_divergence(const Tensor& xs, const Tensor& ys, const KernelSpec& kernel);

// sum_i lambda^Sigma_i * (mean over batch of sum_m |logvar_i[m]|);
// returns an invalid Val when lambda_sigma == 0
Val logvar_penalty(Graph& g, const std::vector<Val>& logvars, double lambda_sigma);

struct LossResult {
  LossBreakdown breakdown;
  Val total;
};

// Recursively stacked objective: data-space transport cost, one analytic
// Gaussian transport cost per intermediate layer, MMD at the top latent
// against fresh standard-normal draws, plus the optional log-variance
// penalty. Noise draw order: encoder eps for layers 1..N, then the prior
// batch.
LossResult stacked_wae_loss(Graph& g, const BoundModel& m, Val x,
                            const LossWeights& weights, const KernelSpec& kernel,
                            NoiseSource& noise);

// One-level ablation: data-space cost plus lambda_1 * MMD between the
// encoded z_1 and the implicit prior realized by ancestral sampling through
// decoders N..2. Deeper encoders do not appear in the objective.
LossResult standard_wae_loss(Graph& g, const BoundModel& m, Val x, double lambda_1,
                             const KernelSpec& kernel, NoiseSource& noise);

}  // namespace swae
