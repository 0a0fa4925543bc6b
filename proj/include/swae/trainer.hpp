#pragma once

#include <functional>
#include <string>

#include "swae/checkpoint.hpp"
#include "swae/config.hpp"
#include "swae/loss.hpp"

namespace swae {

struct StepInfo {
  int epoch = 0;
  int64_t step = 0;
  LossBreakdown breakdown;
};

using StepObserver = std::function<void(const StepInfo&)>;

struct TrainOutcome {
  Checkpoint final_checkpoint;
  int64_t steps = 0;
};

// Runs the configured objective over seeded per-epoch shuffles, writes one
// metrics row per epoch (means of the loss components plus wall seconds),
// checkpoints at the configured cadence and always at the end. Fully
// reproducible from (config, seed) apart from the seconds column. When
// resume_path is set, continues that run up to config.epochs; metrics rows
// are appended.
TrainOutcome train(const TrainConfig& config, const std::string& resume_path = {},
                   const StepObserver& observer = {});

}  // namespace swae
