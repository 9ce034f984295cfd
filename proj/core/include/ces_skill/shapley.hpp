#pragma once

// Exact Shapley attribution by enumerating all K! orderings of the factors.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ces_skill {

inline constexpr std::size_t kMaxShapleyFactors = 8;

// Value of the outcome when the factors whose bit is set in `mask` take their
// end values and the others keep their start values.
using SubsetEvaluator = std::function<double(std::uint32_t mask)>;

struct ShapleyResult {
  std::vector<double> contributions;
  double none = 0.0;  // all factors at start values
  double all = 0.0;   // all factors at end values

  double total() const { return all - none; }
};

// `labels` only serve error messages; they may be empty.
ShapleyResult shapley(const SubsetEvaluator& f, std::size_t K,
                      const std::vector<std::string>& labels = {});

// Same, enumerating orderings of the factors listed in `enumeration`
// (a permutation of 0..K-1). The contributions do not depend on it.
ShapleyResult shapley(const SubsetEvaluator& f, std::size_t K,
                      const std::vector<std::size_t>& enumeration,
                      const std::vector<std::string>& labels = {});

}  // namespace ces_skill
