#pragma once

// Shapley decompositions of skill-premium and relative-labor-demand changes
// built on the estimated technology, plus the education-expansion split.
//
// Skill-premium factors, in the log premium
//   sigma ln(A_h/A_u) + ((sigma-rho)/rho) ln(1 + (A_i k_i / (A_h l_h))^rho)
//     - (1-sigma) ln(l_h/l_u) + ln(omega_h/omega_u),
// are k_i and l_h inside the bracket (capital-skill complementarity slot),
// l_h and l_u in the relative quantity term, and the two technology ratios.
// The wedge is not a factor: its change closes actual minus predicted.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ces_skill/estimation.hpp"
#include "ces_skill/panel.hpp"

namespace ces_skill {

enum class PremiumFactor { k_i, l_h_csc, l_h_rlq, l_u, tech_hu, tech_ih };
inline constexpr std::size_t kPremiumFactors = 6;

std::string_view to_string(PremiumFactor f);
// "csc", "rlq" or "rlat".
std::string_view effect_group(PremiumFactor f);

// Log values of the premium factors at one (country, year).
struct PremiumFactors {
  double ln_k_i = 0.0;
  double ln_l_h_csc = 0.0;
  double ln_l_h_rlq = 0.0;
  double ln_l_u = 0.0;
  double ln_ah_au = 0.0;
  double ln_ai_ah = 0.0;

  double get(PremiumFactor f) const;
  void set(PremiumFactor f, double v);
};

// Log premium without the wedge.
double premium_from_factors(double sigma, double rho, const PremiumFactors& f);

PremiumFactors premium_factors(const ThetaVector& theta, const CountryYearRecord& r);

struct Window {
  int from_year = 0;
  int to_year = 0;
};

struct FactorContribution {
  std::string factor;
  std::string effect;
  double contribution = 0.0;
};

struct DecompositionReport {
  std::string country;
  Window window;
  std::vector<FactorContribution> factors;
  double csc = 0.0;
  double rlq = 0.0;
  double rlat = 0.0;
  double predicted = 0.0;  // sum of contributions
  double actual = 0.0;     // observed change of ln(w_h/w_u)
  double residual = 0.0;   // actual - predicted, the wedge change
};

DecompositionReport decompose_skill_premium(const std::string& country,
                                            const ThetaVector& theta,
                                            const std::vector<CountryYearRecord>& panel,
                                            const Window& window);

struct CrossCountryRow {
  std::string factor;  // k_i, l_h (both slots), l_u, ln_ah_au, ln_ai_ah
  double difference = 0.0;  // base minus other
  std::optional<double> share;  // observed factors: difference / model difference
};

struct CrossCountryReport {
  std::string base_country;
  std::string other_country;
  Window window;
  double data_difference = 0.0;
  double model_difference = 0.0;
  double residual_difference = 0.0;
  std::vector<CrossCountryRow> rows;
};

CrossCountryReport decompose_cross_country(const std::string& base_country,
                                           const std::string& other_country,
                                           const ThetaVector& theta,
                                           const std::vector<CountryYearRecord>& panel,
                                           const Window& window);

// Factors r_i, w_h, w_u, A_h/A_u, A_i/A_h on ln(l_h/l_u) from the demand
// system; wedges stay at their from-year values.
enum class DemandFactor { r_i, w_h, w_u, tech_hu, tech_ih };
inline constexpr std::size_t kDemandFactors = 5;
std::string_view to_string(DemandFactor f);

struct LaborDemandReport {
  std::string country;
  Window window;
  std::vector<FactorContribution> factors;
  double predicted = 0.0;
  double actual = 0.0;
  double residual = 0.0;
};

LaborDemandReport decompose_labor_demand(const std::string& country,
                                         const ThetaVector& theta,
                                         const std::vector<CountryYearRecord>& panel,
                                         const Window& window);

struct EducationEffect {
  double total = 0.0;
  double csc = 0.0;
  double rlq = 0.0;
  std::optional<double> ratio;  // (csc + rlq) / rlq; empty when rlq is ~0
};

EducationEffect education_effect(const std::string& country, const ThetaVector& theta,
                                 const std::vector<CountryYearRecord>& panel,
                                 const Window& window);

struct EffectSeriesRow {
  std::string country;
  int year = 0;
  double csc = 0.0;
  double rlq = 0.0;
  double rlat = 0.0;
  double residual = 0.0;
  double actual = 0.0;
  // Predicted change with technology fixed at its sample mean of logs.
  double observed_only = 0.0;
};

// Decompositions from each country's first year to every later year.
std::vector<EffectSeriesRow> effect_series(const ThetaVector& theta,
                                           const std::vector<CountryYearRecord>& panel);

}  // namespace ces_skill
