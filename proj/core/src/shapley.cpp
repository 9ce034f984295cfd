#include "ces_skill/shapley.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "ces_skill/error.hpp"

namespace ces_skill {
namespace {

std::string describe(std::uint32_t mask, std::size_t K, const std::vector<std::string>& labels) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < K; ++k) {
    if (mask & (1u << k)) names.push_back(k < labels.size() ? labels[k] : std::to_string(k));
  }
  return fmt::format("{{{}}}", fmt::join(names, ", "));
}

}  // namespace

ShapleyResult shapley(const SubsetEvaluator& f, std::size_t K,
                      const std::vector<std::string>& labels) {
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return shapley(f, K, order, labels);
}

ShapleyResult shapley(const SubsetEvaluator& f, std::size_t K,
                      const std::vector<std::size_t>& enumeration,
                      const std::vector<std::string>& labels) {
  if (K == 0 || K > kMaxShapleyFactors) {
    throw DomainError(fmt::format("shapley needs 1..{} factors, got {}", kMaxShapleyFactors, K));
  }
  std::vector<std::size_t> check = enumeration;
  std::sort(check.begin(), check.end());
  for (std::size_t k = 0; k < K; ++k) {
    if (check.size() != K || check[k] != k) {
      throw DomainError("enumeration must be a permutation of the factor indices");
    }
  }

  std::vector<std::optional<double>> cache(std::size_t{1} << K);
  const auto value = [&](std::uint32_t mask) {
    auto& slot = cache[mask];
    if (!slot) {
      double v = 0.0;
      try {
        v = f(mask);
      } catch (const std::exception& e) {
        throw NumericalError(fmt::format("evaluator failed on subset {}: {}",
                                         describe(mask, K, labels), e.what()));
      }
      if (!std::isfinite(v)) {
        throw NumericalError(
            fmt::format("evaluator is not finite on subset {}", describe(mask, K, labels)));
      }
      slot = v;
    }
    return *slot;
  };

  // Walk every ordering and tally how often each (factor, preceding set)
  // pair occurs; the marginal terms are then summed in a fixed subset order,
  // so the result does not depend on the enumeration order.
  std::vector<std::vector<std::uint32_t>> count(K, std::vector<std::uint32_t>(cache.size(), 0));
  std::vector<std::size_t> slots(K);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  double orders = 0.0;
  do {
    std::uint32_t mask = 0;
    for (std::size_t slot : slots) {
      const std::size_t k = enumeration[slot];
      ++count[k][mask];
      mask |= 1u << k;
    }
    orders += 1.0;
  } while (std::next_permutation(slots.begin(), slots.end()));

  ShapleyResult out;
  out.contributions.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::uint32_t mask = 0; mask < cache.size(); ++mask) {
      if (count[k][mask] == 0) continue;
      acc += count[k][mask] * (value(mask | (1u << k)) - value(mask));
    }
    out.contributions[k] = acc / orders;
  }
  out.none = value(0);
  out.all = value(static_cast<std::uint32_t>(cache.size() - 1));
  return out;
}

}  // namespace ces_skill
