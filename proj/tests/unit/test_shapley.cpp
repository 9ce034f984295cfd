#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "ces_skill/error.hpp"
#include "ces_skill/shapley.hpp"

using namespace ces_skill;

namespace {

double bit(std::uint32_t mask, std::size_t k) { return (mask >> k) & 1u ? 1.0 : 0.0; }

// Random smooth outcome over K factors moving from a to b.
struct Nonlinear {
  std::vector<double> a, b;
  double operator()(std::uint32_t mask) const {
    double s = 0.0, p = 1.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double v = bit(mask, k) ? b[k] : a[k];
      s += std::sin(v * (k + 1));
      p *= 1.0 + 0.3 * v;
    }
    return s + p + s * s;
  }
};

Nonlinear random_nonlinear(std::size_t K, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<> u(-1.0, 1.0);
  Nonlinear f;
  for (std::size_t k = 0; k < K; ++k) {
    f.a.push_back(u(gen));
    f.b.push_back(u(gen));
  }
  return f;
}

}  // namespace

TEST(Shapley, AdditiveOutcomeGivesOwnChanges) {
  const std::vector<double> delta = {0.3, -1.2, 0.05, 2.0};
  const auto f = [&](std::uint32_t m) {
    double s = 10.0;
    for (std::size_t k = 0; k < delta.size(); ++k) s += bit(m, k) * delta[k];
    return s;
  };
  const ShapleyResult r = shapley(f, delta.size());
  for (std::size_t k = 0; k < delta.size(); ++k) EXPECT_NEAR(r.contributions[k], delta[k], 1e-14);
  EXPECT_DOUBLE_EQ(r.none, 10.0);
}

TEST(Shapley, SingleFactorTakesTheWholeChange) {
  const ShapleyResult r = shapley([](std::uint32_t m) { return m ? 5.0 : 2.0; }, 1);
  ASSERT_EQ(r.contributions.size(), 1u);
  EXPECT_DOUBLE_EQ(r.contributions[0], 3.0);
}

TEST(Shapley, TwoFactorProductByHand) {
  // f = x*y from (1,1) to (3,2): phi_x = ((3-1) + (6-2))/2 = 3, phi_y = ((2-1) + (6-3))/2 = 2.
  const auto f = [](std::uint32_t m) { return (bit(m, 0) ? 3.0 : 1.0) * (bit(m, 1) ? 2.0 : 1.0); };
  const ShapleyResult r = shapley(f, 2);
  EXPECT_DOUBLE_EQ(r.contributions[0], 3.0);
  EXPECT_DOUBLE_EQ(r.contributions[1], 2.0);
}

TEST(Shapley, EfficiencyOnRandomOutcomes) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const std::size_t K = 1 + seed % 6;
    const Nonlinear f = random_nonlinear(K, seed);
    const ShapleyResult r = shapley(std::cref(f), K);
    const double sum = std::accumulate(r.contributions.begin(), r.contributions.end(), 0.0);
    EXPECT_NEAR(sum, f((1u << K) - 1) - f(0), 1e-12);
    EXPECT_NEAR(r.total(), sum, 1e-12);
  }
}

TEST(Shapley, DummyFactorGetsZero) {
  const Nonlinear g = random_nonlinear(4, 3);
  // Factor 2 never enters.
  const auto f = [&](std::uint32_t m) { return g(m & ~(1u << 2)); };
  EXPECT_EQ(shapley(f, 4).contributions[2], 0.0);
}

TEST(Shapley, SymmetricFactorsShareEqually) {
  const auto f = [](std::uint32_t m) {
    const double x = bit(m, 0) ? 2.0 : 1.0, y = bit(m, 1) ? 2.0 : 1.0, z = bit(m, 2) ? 0.5 : 1.0;
    return std::exp(x + y) * z;
  };
  const ShapleyResult r = shapley(f, 3);
  EXPECT_NEAR(r.contributions[0], r.contributions[1], 1e-12);
}

TEST(Shapley, EnumerationOrderDoesNotMatter) {
  const Nonlinear f = random_nonlinear(5, 11);
  const ShapleyResult a = shapley(std::cref(f), 5);
  std::vector<std::size_t> order = {4, 2, 0, 3, 1};
  const ShapleyResult b = shapley(std::cref(f), 5, order);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a.contributions[k], b.contributions[k], 1e-13);
}

TEST(Shapley, RejectsBadArguments) {
  const auto f = [](std::uint32_t) { return 0.0; };
  EXPECT_THROW(shapley(f, 0), DomainError);
  EXPECT_THROW(shapley(f, kMaxShapleyFactors + 1), DomainError);
  EXPECT_THROW(shapley(f, 3, std::vector<std::size_t>{0, 0, 1}), DomainError);
}

TEST(Shapley, EvaluatorFailureNamesTheSubset) {
  const auto f = [](std::uint32_t m) -> double {
    if (m == 3u) throw DomainError("bad input");
    return 1.0;
  };
  try {
    shapley(f, 3, std::vector<std::string>{"x", "y", "z"});
    FAIL() << "no exception";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("x"), std::string::npos) << e.what();
  }
  const auto nan = [](std::uint32_t m) { return m == 1u ? std::nan("") : 0.0; };
  EXPECT_THROW(shapley(nan, 2), NumericalError);
}
