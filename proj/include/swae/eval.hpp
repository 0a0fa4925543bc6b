#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "swae/dataset.hpp"
#include "swae/loss.hpp"
#include "swae/model.hpp"

namespace swae {

struct ImageGrid {
  int rows = 0, cols = 0, tile_h = 0, tile_w = 0;
  std::vector<double> pixels;  // (rows*tile_h) x (cols*tile_w), row-major, [0,1]

  ImageGrid() = default;
  ImageGrid(int rows, int cols, int tile_h, int tile_w);
  int height() const { return rows * tile_h; }
  int width() const { return cols * tile_w; }
  void set_tile(int r, int c, const double* tile);  // tile_h*tile_w values
  std::vector<double> tile(int r, int c) const;
};

// Binary PGM (P5), maxval 255, pixel = round(clamp01(v) * 255).
void write_pgm(const ImageGrid& grid, const std::string& path);

// Infers a tile shape for a flattened example: the square root when
// data_dim is a perfect square, else 1 x data_dim.
std::pair<int, int> infer_tile_shape(int data_dim);

// (N+1) rows x K cols; bottom row is the data, the i-th row from the bottom
// decodes the layer-i encoding. Mean (frozen-noise) encodings and mean
// decodings throughout.
ImageGrid per_layer_reconstruct(StackedWaeModel& model, const Tensor& x);

// k x k tiles decoding a lattice over [-span, span]^2 in the top latent;
// requires the top latent to be 2-dimensional. Row 0 holds the largest
// second coordinate.
ImageGrid latent_grid(StackedWaeModel& model, double span, int k);

// 1 x (steps+4): [x_a, recon(x_a), decode(lerp(z_a, z_b, alpha)), recon(x_b),
// x_b] with alpha uniform over [0,1] (steps >= 2; a single step uses 0.5).
ImageGrid point_interpolate(StackedWaeModel& model, const Tensor& x_a,
                            const Tensor& x_b, int steps);

struct PcaResult {
  Tensor projection;  // count x 2, centered
  std::array<double, 2> explained_variance;
};

// Projection onto the top-2 eigenvectors of the sample covariance
// (eigendecomposition of the d x d matrix; sign fixed so each component's
// largest-magnitude entry is positive). d == 2 returns the centered input.
PcaResult pca_project(const Tensor& codes);

// Multinomial logistic regression (bias feature appended, zero init,
// full-batch gradient descent: 500 iterations, lr 0.1) on a seeded split;
// returns held-out accuracy.
double linear_probe(const Tensor& codes, const std::vector<int>& labels,
                    double train_fraction, uint64_t seed);

struct CollapseRow {
  int layer = 0;
  double mean_abs_logvar = 0.0;
  double mmd_to_prior = 0.0;
  std::optional<double> probe_accuracy;
};

// One row per layer over a fixed-size sweep (default 2048 examples, or the
// whole dataset when smaller): mean |logvar| of the sampled chain, MMD of
// the sampled encodings against fresh N(0,I) draws, and (when labels exist)
// linear-probe accuracy on the mean encodings.
std::vector<CollapseRow> collapse_report(StackedWaeModel& model, const Dataset& dataset,
                                         const KernelSpec& kernel, uint64_t seed,
                                         int sweep = 2048);

struct SmoothnessStats {
  double adjacent_mean_dist = 0.0;
  double random_mean_dist = 0.0;
};

// Mean pixel L2 distance between grid-adjacent tiles versus seeded random
// tile pairs; smooth manifolds give adjacent < random.
SmoothnessStats grid_adjacency_stats(const ImageGrid& grid, uint64_t seed,
                                     int random_pairs = 1000);

// Monte Carlo estimate of the null standard deviation of the MMD estimator
// (both sets drawn from N(0,I_d)) at the given sample sizes.
double mmd_null_stddev(int n, int dim, const KernelSpec& kernel, int repetitions,
                       uint64_t seed);

}  // namespace swae
