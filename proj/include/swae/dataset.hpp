#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "swae/tensor.hpp"

namespace swae {

struct Dataset {
  std::string name;
  int data_dim = 0;
  Tensor examples;  // {count, data_dim}, values in [0,1]
  std::optional<std::vector<int>> labels;

  int count() const { return examples.shape.empty() ? 0 : examples.shape[0]; }
  Tensor gather(const std::vector<int>& indices) const;
  Tensor head(int k) const;
};

// IDX loader (big-endian headers, unsigned-byte pixels). Pixels are scaled
// by 1/255 into [0,1]; no binarisation. Gzip-compressed files are accepted
// transparently by magic sniffing.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path = {});

enum class SyntheticKind { kGaussianMixture, kGrid };

// GAUSSIAN_MIXTURE: equal-weight mixture of 4 isotropic Gaussians
// (sigma 0.05), component c mean entry j = 0.25 + 0.5 * bit((j % 2), c),
// clamped to [0,1]; labels are component ids (i % 4).
// GRID: row-major lattice of side ceil(count^(1/d)) over [0,1]^d.
Dataset make_synthetic(SyntheticKind kind, int count, int data_dim, uint64_t seed);

// Seeded per-epoch permutation (Fisher-Yates over a stream derived from
// (seed, epoch)), split into batches in order; a final batch smaller than 2
// is dropped.
std::vector<std::vector<int>> batch_iter(int count, int batch_size, uint64_t seed,
                                         int epoch);

}  // namespace swae
