#pragma once

// Four-factor nested CES technology with ICT capital-skill complementarity:
//
//   y = A k_o^a { lambda [ mu k_i^rho + (1-mu) l_h^rho ]^(sigma/rho)
//                 + (1-lambda) l_u^sigma }^((1-a)/sigma)
//
// and the equivalent factor-augmenting form
//
//   y = k_o^a { [ (A_i k_i)^rho + (A_h l_h)^rho ]^(sigma/rho)
//               + (A_u l_u)^sigma }^((1-a)/sigma).
//
// ICT capital k_i and skilled labor l_h share the inner nest; unskilled labor
// l_u enters the outer nest; non-ICT capital k_o is Cobb-Douglas.

#include <array>
#include <string_view>

namespace ces_skill {

enum class Input { k_i, k_o, l_h, l_u };

inline constexpr std::array<Input, 4> kAllInputs = {Input::k_i, Input::k_o,
                                                    Input::l_h, Input::l_u};

std::string_view to_string(Input input);

// Substitution parameters closer to zero than this are rejected.
inline constexpr double kCobbDouglasGuard = 1e-10;

struct ProductionParams {
  double alpha = 1.0 / 3.0;
  double sigma = 0.5;
  double rho = -0.5;
  double A = 1.0;
  double lambda_share = 0.5;
  double mu_share = 0.5;

  // Throws DomainError when an invariant fails.
  void validate() const;
  bool capital_skill_complementarity() const { return sigma > rho; }
};

struct TechLevels {
  double A_i = 1.0;
  double A_h = 1.0;
  double A_u = 1.0;

  void validate() const;
};

struct InputBundle {
  double k_i = 1.0;
  double k_o = 1.0;
  double l_h = 1.0;
  double l_u = 1.0;

  double operator[](Input input) const;
  double& operator[](Input input);
  void validate() const;
};

struct PriceBundle {
  double w_h = 1.0;
  double w_u = 1.0;
  double r_i = 1.0;
  double r_o = 1.0;

  // Price paid for `input`: r_i for k_i, w_h for l_h, and so on.
  double operator[](Input input) const;
  double& operator[](Input input);
  void validate() const;
};

struct WedgeBundle {
  double omega_h = 1.0;
  double omega_u = 1.0;
  double omega_i = 1.0;
  double omega_o = 1.0;

  double operator[](Input input) const;
  void validate() const;
};

// Output from the share-parameter form.
double produce_output(const ProductionParams& params, const InputBundle& x);

// Output from the factor-augmenting form; only alpha, sigma and rho are read
// from `params`.
double produce_output(const ProductionParams& params, const TechLevels& tech,
                      const InputBundle& x);

// Factor-augmenting levels implied by (A, lambda, mu).
TechLevels tech_from_shares(const ProductionParams& params);

// Input prices under profit maximization with multiplicative wedges:
// price_j = omega_j * df/dx_j.
PriceBundle foc_prices(const ProductionParams& params, const InputBundle& x,
                       const WedgeBundle& wedges = {});

// ln(w_h / w_u) implied by the marginal-rate-of-substitution condition.
double skill_premium_log(double sigma, double rho, const TechLevels& tech,
                         const InputBundle& x, double wedge_ratio_hu = 1.0);

// ln(w_h / r_i) implied by the inner-nest condition.
double wage_rental_log(double rho, const TechLevels& tech, const InputBundle& x,
                       double wedge_ratio_hi = 1.0);

// Conditional factor demands at output y, inverting foc_prices.
InputBundle factor_demands(const ProductionParams& params,
                           const TechLevels& tech, const PriceBundle& prices,
                           const WedgeBundle& wedges, double y);

// ln(l_h / l_u) from the demand system. Independent of y, r_o and omega_o.
double relative_labor_demand_log(double sigma, double rho,
                                 const TechLevels& tech,
                                 const PriceBundle& prices,
                                 const WedgeBundle& wedges);

// Morishima elasticity eps_ab = dln x_a/dln p_b - dln x_b/dln p_b, by
// central differences on factor_demands with relative step 1e-6 on p_b.
double morishima(Input a, Input b, const ProductionParams& params,
                 const TechLevels& tech, const PriceBundle& prices,
                 const WedgeBundle& wedges);

}  // namespace ces_skill
