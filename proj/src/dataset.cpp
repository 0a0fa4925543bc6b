#include "swae/dataset.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "swae/rng.hpp"

namespace swae {

Tensor Dataset::gather(const std::vector<int>& indices) const {
  Tensor out({static_cast<int>(indices.size()), data_dim});
  for (size_t r = 0; r < indices.size(); ++r) {
    const int src = indices[r];
    if (src < 0 || src >= count()) {
      throw std::out_of_range("dataset index " + std::to_string(src) + " out of range");
    }
    std::memcpy(out.data.data() + r * data_dim,
                examples.data.data() + static_cast<size_t>(src) * data_dim,
                sizeof(double) * data_dim);
  }
  return out;
}

Tensor Dataset::head(int k) const {
  if (k < 1 || k > count()) {
    throw std::out_of_range("head(" + std::to_string(k) + ") on dataset of " +
                            std::to_string(count()) + " examples");
  }
  Tensor out({k, data_dim});
  std::memcpy(out.data.data(), examples.data.data(),
              sizeof(double) * static_cast<size_t>(k) * data_dim);
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& compressed,
                                  const std::string& path) {
  z_stream strm{};
  if (inflateInit2(&strm, 16 + MAX_WBITS) != Z_OK) {
    throw std::runtime_error("zlib init failed for " + path);
  }
  std::vector<unsigned char> out;
  std::vector<unsigned char> buffer(1 << 16);
  strm.next_in = const_cast<unsigned char*>(compressed.data());
  strm.avail_in = static_cast<uInt>(compressed.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    strm.next_out = buffer.data();
    strm.avail_out = static_cast<uInt>(buffer.size());
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw std::runtime_error("gzip decompression failed for " + path +
                               " (zlib rc " + std::to_string(rc) + ")");
    }
    out.insert(out.end(), buffer.data(), buffer.data() + (buffer.size() - strm.avail_out));
  }
  inflateEnd(&strm);
  return out;
}

std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
  std::vector<unsigned char> raw = read_file(path);
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) return gunzip(raw, path);
  return raw;
}

uint32_t read_be_u32(const std::vector<unsigned char>& bytes, size_t offset,
                     const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw std::runtime_error(path + ": truncated at byte offset " + std::to_string(offset) +
                             " (need 4-byte big-endian word)");
  }
  return (static_cast<uint32_t>(bytes[offset]) << 24) |
         (static_cast<uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<uint32_t>(bytes[offset + 3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<unsigned char> img = read_maybe_gzip(images_path);
  const uint32_t magic = read_be_u32(img, 0, images_path);
  if (magic != 0x00000803u) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%08x", magic);
    throw std::runtime_error(images_path + ": bad images magic " + buf +
                             " at byte offset 0 (expected 0x00000803)");
  }
  const uint32_t count = read_be_u32(img, 4, images_path);
  const uint32_t rows = read_be_u32(img, 8, images_path);
  const uint32_t cols = read_be_u32(img, 12, images_path);
  const size_t expected = 16 + static_cast<size_t>(count) * rows * cols;
  if (img.size() < expected) {
    throw std::runtime_error(images_path + ": truncated payload at byte offset " +
                             std::to_string(img.size()) + " (expected " +
                             std::to_string(expected) + " bytes)");
  }

  Dataset ds;
  ds.name = images_path;
  ds.data_dim = static_cast<int>(rows * cols);
  ds.examples = Tensor({static_cast<int>(count), ds.data_dim});
  for (size_t i = 0; i < static_cast<size_t>(count) * rows * cols; ++i) {
    ds.examples.data[i] = img[16 + i] / 255.0;
  }

  if (!labels_path.empty()) {
    const std::vector<unsigned char> lbl = read_maybe_gzip(labels_path);
    const uint32_t lbl_magic = read_be_u32(lbl, 0, labels_path);
    if (lbl_magic != 0x00000801u) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "0x%08x", lbl_magic);
      throw std::runtime_error(labels_path + ": bad labels magic " + buf +
                               " at byte offset 0 (expected 0x00000801)");
    }
    const uint32_t lbl_count = read_be_u32(lbl, 4, labels_path);
    if (lbl_count != count) {
      throw std::runtime_error("label count " + std::to_string(lbl_count) +
                               " does not match image count " + std::to_string(count));
    }
    if (lbl.size() < 8 + lbl_count) {
      throw std::runtime_error(labels_path + ": truncated payload at byte offset " +
                               std::to_string(lbl.size()) + " (expected " +
                               std::to_string(8 + lbl_count) + " bytes)");
    }
    std::vector<int> labels(lbl_count);
    for (uint32_t i = 0; i < lbl_count; ++i) labels[i] = lbl[8 + i];
    ds.labels = std::move(labels);
  }
  return ds;
}

Dataset make_synthetic(SyntheticKind kind, int count, int data_dim, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("synthetic dataset needs count >= 1");
  if (data_dim < 1) throw std::invalid_argument("synthetic dataset needs data_dim >= 1");
  Dataset ds;
  ds.data_dim = data_dim;
  ds.examples = Tensor({count, data_dim});

  switch (kind) {
    case SyntheticKind::kGaussianMixture: {
      ds.name = "gaussian-mixture";
      constexpr double kSigma = 0.05;
      RngState rng(seed);
      std::vector<int> labels(count);
      for (int i = 0; i < count; ++i) {
        const int c = i % 4;
        labels[i] = c;
        for (int j = 0; j < data_dim; ++j) {
          const double mean = 0.25 + 0.5 * ((c >> (j % 2)) & 1);
          double v = mean + kSigma * rng.normal();
          ds.examples.at(i, j) = std::min(1.0, std::max(0.0, v));
        }
      }
      ds.labels = std::move(labels);
      break;
    }
    case SyntheticKind::kGrid: {
      ds.name = "grid";
      const int side = std::max(
          1, static_cast<int>(std::ceil(std::pow(count, 1.0 / data_dim) - 1e-9)));
      for (int i = 0; i < count; ++i) {
        int rem = i;
        for (int j = data_dim - 1; j >= 0; --j) {
          const int coord = rem % side;
          rem /= side;
          ds.examples.at(i, j) = side > 1 ? static_cast<double>(coord) / (side - 1) : 0.0;
        }
      }
      break;
    }
  }
  return ds;
}

std::vector<std::vector<int>> batch_iter(int count, int batch_size, uint64_t seed,
                                         int epoch) {
  if (batch_size < 2) {
    throw std::invalid_argument("batch_size must be >= 2, got " + std::to_string(batch_size));
  }
  if (count < 1) throw std::invalid_argument("batch_iter on empty dataset");

  // permutation stream: derive(shuffle tag) then derive(epoch)
  RngState rng = RngState(seed).derive(0x53485546ull /*"SHUF"*/).derive(
      static_cast<uint64_t>(epoch));
  std::vector<int> perm(count);
  for (int i = 0; i < count; ++i) perm[i] = i;
  for (int i = count - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }

  std::vector<std::vector<int>> batches;
  for (int start = 0; start < count; start += batch_size) {
    const int end = std::min(count, start + batch_size);
    if (end - start < 2) break;  // MMD estimator needs >= 2
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

}  // namespace swae
