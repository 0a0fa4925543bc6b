#include "swae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "swae/rng.hpp"

namespace swae {

ImageGrid::ImageGrid(int rows_, int cols_, int tile_h_, int tile_w_)
    : rows(rows_), cols(cols_), tile_h(tile_h_), tile_w(tile_w_) {
  if (rows < 1 || cols < 1 || tile_h < 1 || tile_w < 1) {
    throw std::invalid_argument("image grid dimensions must be positive");
  }
  pixels.assign(static_cast<size_t>(rows) * cols * tile_h * tile_w, 0.0);
}

void ImageGrid::set_tile(int r, int c, const double* tile) {
  if (r < 0 || r >= rows || c < 0 || c >= cols) {
    throw std::out_of_range("tile index out of range");
  }
  for (int y = 0; y < tile_h; ++y) {
    double* dst = pixels.data() +
                  (static_cast<size_t>(r) * tile_h + y) * width() +
                  static_cast<size_t>(c) * tile_w;
    const double* src = tile + static_cast<size_t>(y) * tile_w;
    std::copy(src, src + tile_w, dst);
  }
}

std::vector<double> ImageGrid::tile(int r, int c) const {
  if (r < 0 || r >= rows || c < 0 || c >= cols) {
    throw std::out_of_range("tile index out of range");
  }
  std::vector<double> out(static_cast<size_t>(tile_h) * tile_w);
  for (int y = 0; y < tile_h; ++y) {
    const double* src = pixels.data() +
                        (static_cast<size_t>(r) * tile_h + y) * width() +
                        static_cast<size_t>(c) * tile_w;
    std::copy(src, src + tile_w, out.data() + static_cast<size_t>(y) * tile_w);
  }
  return out;
}

void write_pgm(const ImageGrid& grid, const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::path(path).has_parent_path()) {
    fs::create_directories(fs::path(path).parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open image path for writing: " + path);
  out << "P5\n" << grid.width() << " " << grid.height() << "\n255\n";
  for (double v : grid.pixels) {
    const double c = std::min(1.0, std::max(0.0, v));
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  if (!out) throw std::runtime_error("failed writing image: " + path);
}

std::pair<int, int> infer_tile_shape(int data_dim) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(data_dim))));
  if (side * side == data_dim) return {side, side};
  return {1, data_dim};
}

ImageGrid per_layer_reconstruct(StackedWaeModel& model, const Tensor& x) {
  if (x.rank() != 2 || x.shape[1] != model.spec.data_dim) {
    throw std::invalid_argument("per_layer_reconstruct expects batch x data_dim input");
  }
  const int K = x.shape[0];
  const int N = model.spec.n_layers;
  auto [tile_h, tile_w] = infer_tile_shape(model.spec.data_dim);
  ImageGrid grid(N + 1, K, tile_h, tile_w);
  // bottom row: data
  for (int c = 0; c < K; ++c) {
    grid.set_tile(N, c, x.data.data() + static_cast<size_t>(c) * model.spec.data_dim);
  }
  // row i from the bottom: reconstruction through layer i
  for (int depth = 1; depth <= N; ++depth) {
    Tensor recon = reconstruct_mean(model, x, depth);
    for (int c = 0; c < K; ++c) {
      grid.set_tile(N - depth, c,
                    recon.data.data() + static_cast<size_t>(c) * model.spec.data_dim);
    }
  }
  return grid;
}

ImageGrid latent_grid(StackedWaeModel& model, double span, int k) {
  const int N = model.spec.n_layers;
  const int top_dim = model.spec.latent_dims[N - 1];
  if (top_dim != 2) {
    throw std::invalid_argument("latent_grid needs a 2-dimensional top latent, model has " +
                                std::to_string(top_dim));
  }
  if (k < 1) throw std::invalid_argument("latent_grid needs k >= 1");

  Tensor z({k * k, 2});
  auto coord = [&](int idx) {
    return k == 1 ? 0.0 : -span + 2.0 * span * idx / (k - 1);
  };
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      z.at(r * k + c, 0) = coord(c);
      z.at(r * k + c, 1) = coord(k - 1 - r);  // top row holds the largest y
    }
  }
  Tensor decoded = decode_mean(model, N, z);
  auto [tile_h, tile_w] = infer_tile_shape(model.spec.data_dim);
  ImageGrid grid(k, k, tile_h, tile_w);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      grid.set_tile(r, c,
                    decoded.data.data() +
                        (static_cast<size_t>(r) * k + c) * model.spec.data_dim);
    }
  }
  return grid;
}

ImageGrid point_interpolate(StackedWaeModel& model, const Tensor& x_a,
                            const Tensor& x_b, int steps) {
  if (steps < 1) throw std::invalid_argument("point_interpolate needs steps >= 1");
  const int d = model.spec.data_dim;
  auto check = [&](const Tensor& t, const char* what) {
    if (t.shape != Shape{1, d}) {
      throw std::invalid_argument(std::string(what) + " must be a single example of shape [1x" +
                                  std::to_string(d) + "]");
    }
  };
  check(x_a, "x_a");
  check(x_b, "x_b");

  const int N = model.spec.n_layers;
  Tensor z_a = encode_mean(model, x_a, N);
  Tensor z_b = encode_mean(model, x_b, N);
  Tensor recon_a = decode_mean(model, N, z_a);
  Tensor recon_b = decode_mean(model, N, z_b);

  const int top_dim = model.spec.latent_dims[N - 1];
  Tensor z_path({steps, top_dim});
  for (int s = 0; s < steps; ++s) {
    const double alpha = steps == 1 ? 0.5 : static_cast<double>(s) / (steps - 1);
    for (int j = 0; j < top_dim; ++j) {
      z_path.at(s, j) = (1.0 - alpha) * z_a.data[j] + alpha * z_b.data[j];
    }
  }
  Tensor decoded = decode_mean(model, N, z_path);

  auto [tile_h, tile_w] = infer_tile_shape(d);
  ImageGrid grid(1, steps + 4, tile_h, tile_w);
  grid.set_tile(0, 0, x_a.data.data());
  grid.set_tile(0, 1, recon_a.data.data());
  for (int s = 0; s < steps; ++s) {
    grid.set_tile(0, 2 + s, decoded.data.data() + static_cast<size_t>(s) * d);
  }
  grid.set_tile(0, steps + 2, recon_b.data.data());
  grid.set_tile(0, steps + 3, x_b.data.data());
  return grid;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
// eigenvalues (descending) and matching unit eigenvectors as rows.
void jacobi_eigensymm(std::vector<double>& a, int d, std::vector<double>& eigvals,
                      std::vector<double>& eigvecs) {
  eigvecs.assign(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) eigvecs[static_cast<size_t>(i) * d + i] = 1.0;

  auto at = [&](std::vector<double>& m, int i, int j) -> double& {
    return m[static_cast<size_t>(i) * d + j];
  };
  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) off += at(a, i, j) * at(a, i, j);
    }
    if (off < 1e-26) break;
    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = at(a, p, q);
        if (apq == 0.0) continue;
        const double app = at(a, p, p), aqq = at(a, q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = at(a, k, p), akq = at(a, k, q);
          at(a, k, p) = c * akp - s * akq;
          at(a, k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = at(a, p, k), aqk = at(a, q, k);
          at(a, p, k) = c * apk - s * aqk;
          at(a, q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = at(eigvecs, k, p), vkq = at(eigvecs, k, q);
          at(eigvecs, k, p) = c * vkp - s * vkq;
          at(eigvecs, k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  // columns of eigvecs are eigenvectors; sort by eigenvalue descending
  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
    return a[static_cast<size_t>(lhs) * d + lhs] > a[static_cast<size_t>(rhs) * d + rhs];
  });
  eigvals.assign(d, 0.0);
  std::vector<double> sorted(static_cast<size_t>(d) * d, 0.0);
  for (int rank = 0; rank < d; ++rank) {
    const int col = order[rank];
    eigvals[rank] = a[static_cast<size_t>(col) * d + col];
    for (int k = 0; k < d; ++k) {
      sorted[static_cast<size_t>(rank) * d + k] = eigvecs[static_cast<size_t>(k) * d + col];
    }
  }
  eigvecs = std::move(sorted);
}

}  // namespace

PcaResult pca_project(const Tensor& codes) {
  if (codes.rank() != 2) throw std::invalid_argument("pca_project expects a count x d matrix");
  const int count = codes.shape[0], d = codes.shape[1];
  if (count < 3) throw std::invalid_argument("pca_project needs at least 3 rows");
  if (d < 2) throw std::invalid_argument("pca_project needs dimension >= 2");

  Tensor centered({count, d});
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int i = 0; i < count; ++i) mean += codes.at(i, j);
    mean /= count;
    for (int i = 0; i < count; ++i) centered.at(i, j) = codes.at(i, j) - mean;
  }

  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < count; ++i) {
    for (int a = 0; a < d; ++a) {
      const double va = centered.at(i, a);
      for (int b = a; b < d; ++b) {
        cov[static_cast<size_t>(a) * d + b] += va * centered.at(i, b);
      }
    }
  }
  double max_var = 0.0;
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      const double v = cov[static_cast<size_t>(a) * d + b] / (count - 1);
      cov[static_cast<size_t>(a) * d + b] = v;
      cov[static_cast<size_t>(b) * d + a] = v;
      if (a == b) max_var = std::max(max_var, v);
    }
  }
  if (max_var == 0.0) {
    throw std::invalid_argument("pca_project: input has rank 0 (all rows identical)");
  }

  std::vector<double> eigvals, eigvecs;
  jacobi_eigensymm(cov, d, eigvals, eigvecs);

  PcaResult result;
  result.explained_variance = {eigvals[0], d > 1 ? eigvals[1] : 0.0};
  if (d == 2) {
    result.projection = centered;  // directly plottable
    return result;
  }
  // sign convention: largest-magnitude entry of each component positive
  for (int comp = 0; comp < 2; ++comp) {
    double* v = eigvecs.data() + static_cast<size_t>(comp) * d;
    int arg = 0;
    for (int k = 1; k < d; ++k) {
      if (std::fabs(v[k]) > std::fabs(v[arg])) arg = k;
    }
    if (v[arg] < 0.0) {
      for (int k = 0; k < d; ++k) v[k] = -v[k];
    }
  }
  result.projection = Tensor({count, 2});
  for (int i = 0; i < count; ++i) {
    for (int comp = 0; comp < 2; ++comp) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        acc += centered.at(i, k) * eigvecs[static_cast<size_t>(comp) * d + k];
      }
      result.projection.at(i, comp) = acc;
    }
  }
  return result;
}

double linear_probe(const Tensor& codes, const std::vector<int>& labels,
                    double train_fraction, uint64_t seed) {
  if (codes.rank() != 2) throw std::invalid_argument("linear_probe expects count x d codes");
  const int count = codes.shape[0], d = codes.shape[1];
  if (static_cast<int>(labels.size()) != count) {
    throw std::invalid_argument("linear_probe labels length mismatch");
  }
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  }
  int n_classes = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("linear_probe labels must be non-negative");
    n_classes = std::max(n_classes, l + 1);
  }

  RngState rng(seed);
  std::vector<int> perm(count);
  for (int i = 0; i < count; ++i) perm[i] = i;
  for (int i = count - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  const int n_train = std::max(1, static_cast<int>(std::ceil(train_fraction * count)));
  if (n_train >= count) throw std::invalid_argument("train split leaves no held-out examples");

  std::vector<bool> train_class(n_classes, false);
  for (int i = 0; i < n_train; ++i) train_class[labels[perm[i]]] = true;
  if (std::count(train_class.begin(), train_class.end(), true) < 2) {
    throw std::invalid_argument("linear_probe needs >= 2 classes in the training split");
  }

  // multinomial logistic regression, bias feature appended
  const int f = d + 1;
  std::vector<double> w(static_cast<size_t>(f) * n_classes, 0.0);
  std::vector<double> logits(n_classes), probs(n_classes);
  std::vector<double> grad(static_cast<size_t>(f) * n_classes);
  constexpr int kIters = 500;
  constexpr double kLr = 0.1;
  for (int iter = 0; iter < kIters; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int t = 0; t < n_train; ++t) {
      const int i = perm[t];
      for (int c = 0; c < n_classes; ++c) {
        double acc = w[static_cast<size_t>(d) * n_classes + c];  // bias
        for (int k = 0; k < d; ++k) {
          acc += codes.at(i, k) * w[static_cast<size_t>(k) * n_classes + c];
        }
        logits[c] = acc;
      }
      const double max_logit = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (int c = 0; c < n_classes; ++c) {
        probs[c] = std::exp(logits[c] - max_logit);
        z += probs[c];
      }
      for (int c = 0; c < n_classes; ++c) {
        const double err = probs[c] / z - (labels[i] == c ? 1.0 : 0.0);
        for (int k = 0; k < d; ++k) {
          grad[static_cast<size_t>(k) * n_classes + c] += codes.at(i, k) * err;
        }
        grad[static_cast<size_t>(d) * n_classes + c] += err;
      }
    }
    const double step = kLr / n_train;
    for (size_t k = 0; k < w.size(); ++k) w[k] -= step * grad[k];
  }

  int correct = 0;
  const int n_test = count - n_train;
  for (int t = n_train; t < count; ++t) {
    const int i = perm[t];
    int best = 0;
    double best_score = -1e300;
    for (int c = 0; c < n_classes; ++c) {
      double acc = w[static_cast<size_t>(d) * n_classes + c];
      for (int k = 0; k < d; ++k) {
        acc += codes.at(i, k) * w[static_cast<size_t>(k) * n_classes + c];
      }
      if (acc > best_score) {
        best_score = acc;
        best = c;
      }
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / n_test;
}

std::vector<CollapseRow> collapse_report(StackedWaeModel& model, const Dataset& dataset,
                                         const KernelSpec& kernel, uint64_t seed,
                                         int sweep) {
  const int n = std::min(sweep, dataset.count());
  if (n < 2) throw std::invalid_argument("collapse_report needs at least 2 examples");
  Tensor x = dataset.head(n);

  RngState rng(seed);
  auto encodings = encode_diagnostics(model, x, rng);

  std::vector<CollapseRow> rows;
  for (int layer = 1; layer <= model.spec.n_layers; ++layer) {
    const LayerEncodings& enc = encodings[layer - 1];
    CollapseRow row;
    row.layer = layer;
    double abs_sum = 0.0;
    for (double v : enc.logvar.data) abs_sum += std::fabs(v);
    row.mean_abs_logvar = abs_sum / static_cast<double>(enc.logvar.numel());

    const int dim = model.spec.latent_dims[layer - 1];
    Tensor prior = rng.normal_tensor({n, dim});
    row.mmd_to_prior = mmd_divergence(enc.z_sample, prior, kernel);

    if (dataset.labels) {
      std::vector<int> labels(dataset.labels->begin(), dataset.labels->begin() + n);
      row.probe_accuracy = linear_probe(enc.z_mean, labels, 0.8, seed);
    }
    rows.push_back(row);
  }
  return rows;
}

SmoothnessStats grid_adjacency_stats(const ImageGrid& grid, uint64_t seed,
                                     int random_pairs) {
  const int tiles = grid.rows * grid.cols;
  if (tiles < 2) throw std::invalid_argument("grid_adjacency_stats needs >= 2 tiles");
  auto dist = [&](int r0, int c0, int r1, int c1) {
    const auto a = grid.tile(r0, c0);
    const auto b = grid.tile(r1, c1);
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      acc += diff * diff;
    }
    return std::sqrt(acc);
  };

  SmoothnessStats stats;
  int adjacent = 0;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      if (c + 1 < grid.cols) {
        stats.adjacent_mean_dist += dist(r, c, r, c + 1);
        ++adjacent;
      }
      if (r + 1 < grid.rows) {
        stats.adjacent_mean_dist += dist(r, c, r + 1, c);
        ++adjacent;
      }
    }
  }
  stats.adjacent_mean_dist /= adjacent;

  RngState rng(seed);
  int sampled = 0;
  while (sampled < random_pairs) {
    const int a = static_cast<int>(rng.next_below(static_cast<uint64_t>(tiles)));
    const int b = static_cast<int>(rng.next_below(static_cast<uint64_t>(tiles)));
    if (a == b) continue;
    stats.random_mean_dist += dist(a / grid.cols, a % grid.cols, b / grid.cols, b % grid.cols);
    ++sampled;
  }
  stats.random_mean_dist /= random_pairs;
  return stats;
}

double mmd_null_stddev(int n, int dim, const KernelSpec& kernel, int repetitions,
                       uint64_t seed) {
  if (repetitions < 2) throw std::invalid_argument("mmd_null_stddev needs >= 2 repetitions");
  RngState rng(seed);
  std::vector<double> values(repetitions);
  for (int r = 0; r < repetitions; ++r) {
    Tensor xs = rng.normal_tensor({n, dim});
    Tensor ys = rng.normal_tensor({n, dim});
    values[r] = mmd_divergence(xs, ys, kernel);
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= repetitions;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= (repetitions - 1);
  return std::sqrt(var);
}

}  // namespace swae
