#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "swae/model.hpp"
#include "swae/optimizer.hpp"
#include "swae/tensor.hpp"

namespace swae {

// Binary layout: 8 magic bytes, u32 version, u64 header length, JSON header
// (hierarchy spec, config echo, counters, rng state, named tensor
// directory), tensor payload as little-endian f64 in directory order, and a
// trailing CRC32 over everything before it.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  HierarchySpec spec;
  std::map<std::string, std::string> config_echo;
  int64_t step = 0;
  int epochs_done = 0;
  uint64_t rng_state = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  static Checkpoint capture(const StackedWaeModel& model, const AdamState& adam,
                            const std::map<std::string, std::string>& config_echo,
                            int64_t step, int epochs_done, uint64_t rng_state);

  StackedWaeModel restore_model() const;
  AdamState restore_adam(const StackedWaeModel& model) const;
  const Tensor& tensor(const std::string& name) const;
};

// Atomic: writes to a temp file in the same directory, then renames.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

uint32_t crc32(const unsigned char* data, size_t len, uint32_t seed = 0);

}  // namespace swae
