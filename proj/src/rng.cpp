#include "swae/rng.hpp"

#include <stdexcept>

namespace swae {

Tensor PlaybackNoise::normal(int rows, int cols) {
  if (next_ >= draws_.size()) {
    throw std::runtime_error("playback noise exhausted after " +
                             std::to_string(draws_.size()) + " draws");
  }
  const Tensor& t = draws_[next_++];
  if (t.shape != Shape{rows, cols}) {
    throw std::runtime_error("playback noise draw " + std::to_string(next_ - 1) +
                             " has shape " + shape_str(t.shape) + ", expected [" +
                             std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  return t;
}

}  // namespace swae
