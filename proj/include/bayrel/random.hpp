#pragma once

#include <cstdint>
#include <random>

#include "bayrel/tensor.hpp"

namespace bayrel {

enum class RandomKind { standard_gaussian, uniform01, logistic };

// Seeded draws with a platform-independent bit stream: mt19937_64 plus
// explicit transforms, no std::*_distribution (those vary across
// standard libraries). Same seed + same call sequence = identical values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Open interval (0,1), 52-bit resolution; never exactly 0 or 1.
  double uniform01();

  // Box-Muller; consumes two uniforms per draw.
  double gaussian();

  // log u - log(1-u), u ~ uniform01.
  double logistic();

  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  Tensor sample(RandomKind kind, const Shape& shape);

 private:
  std::mt19937_64 gen_;
};

// Fixed-offset sub-seed derivation (splitmix64 mix), so independent
// stages of a run get decorrelated but reproducible streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace bayrel
