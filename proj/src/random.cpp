#include "bayrel/random.hpp"

#include <cmath>
#include <stdexcept>

namespace bayrel {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double Rng::uniform01() {
  // 52 high bits, offset by half a step: values lie strictly inside (0,1).
  const std::uint64_t bits = gen_() >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1p-52;
}

double Rng::gaussian() {
  const double u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::logistic() {
  const double u = uniform01();
  return std::log(u) - std::log1p(-u);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  return static_cast<std::size_t>(gen_() % n);
}

Tensor Rng::sample(RandomKind kind, const Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  switch (kind) {
    case RandomKind::standard_gaussian:
      for (double& v : t.data) v = gaussian();
      break;
    case RandomKind::uniform01:
      for (double& v : t.data) v = uniform01();
      break;
    case RandomKind::logistic:
      for (double& v : t.data) v = logistic();
      break;
  }
  return t;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace bayrel
