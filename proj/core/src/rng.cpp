#include "ces_skill/rng.hpp"

#include <cmath>
#include <numbers>

namespace ces_skill::rng {

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Key::Key(std::uint64_t seed, std::initializer_list<std::uint64_t> parts)
    : h_(splitmix64(seed)) {
  for (std::uint64_t p : parts) h_ = splitmix64(h_ ^ p);
}

double Key::uniform(std::uint64_t n) const {
  return (static_cast<double>(splitmix64(h_ ^ n) >> 11) + 0.5) * 0x1.0p-53;
}

double Key::normal(std::uint64_t n) const {
  const double u1 = uniform(2 * n);
  const double u2 = uniform(2 * n + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ces_skill::rng
