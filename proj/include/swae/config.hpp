#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "swae/dataset.hpp"
#include "swae/loss.hpp"
#include "swae/model.hpp"
#include "swae/optimizer.hpp"

namespace swae {

using ConfigMap = std::map<std::string, std::string>;

// Flat "key = value" text, one pair per line, '#' comments. Keys are dotted
// (see README for the full reference).
ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);
// overrides are "key=value" strings, applied in order
void apply_overrides(ConfigMap& config, const std::vector<std::string>& overrides);

enum class Objective { kStacked, kStandardWae };

struct DataConfig {
  enum class Kind { kIdx, kGaussianMixture, kGrid };
  Kind kind = Kind::kGaussianMixture;
  std::string images_path;
  std::string labels_path;
  int count = 256;
  int dim = 4;
  uint64_t seed = 0;
};

struct TrainConfig {
  Objective objective = Objective::kStacked;
  int epochs = 1;
  int batch_size = 128;
  AdamConfig adam;
  uint64_t seed = 1;
  LossWeights weights;
  KernelSpec kernel;
  HierarchySpec spec;
  DataConfig data;
  std::string checkpoint_path = "out/checkpoint.swae";
  std::string metrics_path = "out/metrics.csv";
  int checkpoint_every = 0;  // epochs; 0 = final checkpoint only

  void validate() const;

  // 5000 epochs, batch 128, Adam defaults
  static TrainConfig mnist_paper_preset();
};

TrainConfig config_from_map(const ConfigMap& map);
// canonical serialization; round-trips through config_from_map
ConfigMap config_to_map(const TrainConfig& config);

Dataset load_dataset(const DataConfig& data);

}  // namespace swae
