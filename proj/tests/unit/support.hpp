#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ces_skill/model.hpp"

namespace ces_skill::testing {

class Draws {
 public:
  explicit Draws(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<>(lo, hi)(gen_); }

  // Substitution parameter in [lo, hi] kept away from the Cobb-Douglas point.
  double substitution(double lo, double hi) {
    double v = 0.0;
    do {
      v = uniform(lo, hi);
    } while (std::abs(v) < 0.05);
    return v;
  }

  ProductionParams params() {
    ProductionParams p;
    p.alpha = uniform(0.2, 0.5);
    p.sigma = substitution(-1.0, 0.9);
    p.rho = substitution(-1.5, 0.9);
    p.A = uniform(0.5, 2.0);
    p.lambda_share = uniform(0.2, 0.8);
    p.mu_share = uniform(0.2, 0.8);
    return p;
  }

  InputBundle inputs() {
    return {std::exp(uniform(-1, 1)), std::exp(uniform(-1, 1)), std::exp(uniform(-1, 1)),
            std::exp(uniform(-1, 1))};
  }

  TechLevels tech() {
    return {std::exp(uniform(-0.7, 0.7)), std::exp(uniform(-0.7, 0.7)),
            std::exp(uniform(-0.7, 0.7))};
  }

  WedgeBundle wedges() {
    return {std::exp(uniform(-0.2, 0.2)), std::exp(uniform(-0.2, 0.2)),
            std::exp(uniform(-0.2, 0.2)), std::exp(uniform(-0.2, 0.2))};
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace ces_skill::testing
