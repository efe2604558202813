#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "point.hpp"

namespace selfint {

// Purpose of a stream; distinct tags never share draws.
enum class StreamTag : std::uint32_t {
  Main = 0,
  Auxiliary = 1,
  Initial = 2,
  Coupling = 3,
  Bootstrap = 4,
};

// Reproducible Gaussian stream keyed by (seed, replica, tag, index).
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t replica, StreamTag tag, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replica), static_cast<std::uint32_t>(replica >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    rng_.seed(seq);
  }

  double normal() { return normal_(rng_); }
  double uniform() { return uniform_(rng_); }

  // Brownian increment over dt in R^D.
  template <int D>
  Point<D> increment(double dt) {
    Point<D> p{};
    const double s = std::sqrt(dt);
    for (auto& v : p) v = s * normal();
    return p;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace selfint
