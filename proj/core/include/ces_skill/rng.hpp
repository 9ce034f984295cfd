#pragma once

// Counter-based random numbers. A draw is a pure function of its key, so
// streams are reproducible in any language and independent of call order.
//
//   h = splitmix64(seed); for each key part p: h = splitmix64(h ^ p)
//   uniform(key, n) = (splitmix64(h ^ n) >> 11 + 0.5) * 2^-53      in (0, 1)
//   normal(key, n)  = sqrt(-2 ln u(2n)) * cos(2 pi u(2n+1))         Box-Muller
//
// splitmix64(x): z = x + 0x9E3779B97F4A7C15;
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//                return z ^ (z >> 31).

#include <cstdint>
#include <initializer_list>

namespace ces_skill::rng {

std::uint64_t splitmix64(std::uint64_t x);

class Key {
 public:
  Key(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

  std::uint64_t hash() const { return h_; }
  double uniform(std::uint64_t n = 0) const;
  double normal(std::uint64_t n = 0) const;

 private:
  std::uint64_t h_;
};

}  // namespace ces_skill::rng
