#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "swae/tensor.hpp"

namespace swae {

// splitmix64 stream. The entire state is one u64 so checkpoints can carry
// it and resumed runs continue the exact draw sequence.
class RngState {
 public:
  RngState() = default;
  explicit RngState(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform on [0,1) with 53-bit resolution
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // index in [0, bound)
  uint64_t next_below(uint64_t bound) { return next_u64() % bound; }

  // Standard normal via Box-Muller. Two uniforms per draw and no cached
  // spare, so the stream position is a pure function of the draw count.
  double normal() {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  Tensor normal_tensor(Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = normal();
    return t;
  }

  // Independent stream keyed on (state, tag). Derivation does not advance
  // this stream.
  RngState derive(uint64_t tag) const {
    RngState mixer(state_ ^ (tag * 0xD1B54A32D192ED03ull));
    return RngState(mixer.next_u64());
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_ = 0;
};

// Source of reparameterization noise. Losses and samplers draw through this
// interface so tests can freeze or record the draws.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual Tensor normal(int rows, int cols) = 0;
};

class RngNoise : public NoiseSource {
 public:
  explicit RngNoise(RngState& rng) : rng_(&rng) {}
  Tensor normal(int rows, int cols) override {
    return rng_->normal_tensor({rows, cols});
  }

 private:
  RngState* rng_;
};

// Frozen-mean hook: every draw is zero, so samples collapse to means.
class ZeroNoise : public NoiseSource {
 public:
  Tensor normal(int rows, int cols) override {
    return Tensor::zeros({rows, cols});
  }
};

// Wraps another source and keeps a copy of every draw, in order.
class RecordingNoise : public NoiseSource {
 public:
  explicit RecordingNoise(NoiseSource& inner) : inner_(&inner) {}
  Tensor normal(int rows, int cols) override {
    Tensor t = inner_->normal(rows, cols);
    draws.push_back(t);
    return t;
  }
  std::vector<Tensor> draws;

 private:
  NoiseSource* inner_;
};

// Replays a recorded draw sequence.
class PlaybackNoise : public NoiseSource {
 public:
  explicit PlaybackNoise(std::vector<Tensor> draws) : draws_(std::move(draws)) {}
  Tensor normal(int rows, int cols) override;

 private:
  std::vector<Tensor> draws_;
  size_t next_ = 0;
};

}  // namespace swae
