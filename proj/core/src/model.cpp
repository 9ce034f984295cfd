#include "ces_skill/model.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

#include "ces_skill/error.hpp"
#include "ces_skill/numeric.hpp"

namespace ces_skill {
namespace {

using numeric::log_add_exp;

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(fmt::format("{} must be positive and finite, got {}", name, v));
  }
}

void require_substitution(double v, const char* name) {
  if (!std::isfinite(v) || !(v < 1.0)) {
    throw DomainError(fmt::format("{} must be < 1, got {}", name, v));
  }
  if (std::abs(v) < kCobbDouglasGuard) {
    throw DomainError(fmt::format(
        "{} = {} is at the Cobb-Douglas limit, which is not supported", name, v));
  }
}

double checked_exp(double log_value, const char* what) {
  if (!std::isfinite(log_value) || log_value > numeric::kMaxLog) {
    throw NumericalError(fmt::format("{} overflows (log value {})", what, log_value));
  }
  return std::exp(log_value);
}

// Log-domain pieces of the factor-augmenting form, shared by output and FOCs.
struct Nests {
  double log_xi;     // rho ln(A_i k_i)
  double log_xh;     // rho ln(A_h l_h)
  double log_inner;  // ln[(A_i k_i)^rho + (A_h l_h)^rho]
  double log_skill;  // (sigma/rho) log_inner
  double log_unsk;   // sigma ln(A_u l_u)
  double log_outer;  // ln(skill composite + unskilled term)
  double log_y;
};

Nests evaluate_nests(double alpha, double sigma, double rho,
                     const TechLevels& tech, const InputBundle& x) {
  Nests n{};
  n.log_xi = rho * (std::log(tech.A_i) + std::log(x.k_i));
  n.log_xh = rho * (std::log(tech.A_h) + std::log(x.l_h));
  n.log_inner = log_add_exp(n.log_xi, n.log_xh);
  n.log_skill = (sigma / rho) * n.log_inner;
  n.log_unsk = sigma * (std::log(tech.A_u) + std::log(x.l_u));
  n.log_outer = log_add_exp(n.log_skill, n.log_unsk);
  n.log_y = alpha * std::log(x.k_o) + ((1.0 - alpha) / sigma) * n.log_outer;
  return n;
}

void validate_core(const ProductionParams& p) {
  if (!(p.alpha > 0.0 && p.alpha < 1.0)) {
    throw DomainError(fmt::format("alpha must lie in (0,1), got {}", p.alpha));
  }
  require_substitution(p.sigma, "sigma");
  require_substitution(p.rho, "rho");
}

}  // namespace

std::string_view to_string(Input input) {
  switch (input) {
    case Input::k_i: return "k_i";
    case Input::k_o: return "k_o";
    case Input::l_h: return "l_h";
    case Input::l_u: return "l_u";
  }
  return "?";
}

void ProductionParams::validate() const {
  validate_core(*this);
  require_positive(A, "A");
  if (!(lambda_share > 0.0 && lambda_share < 1.0)) {
    throw DomainError(fmt::format("lambda must lie in (0,1), got {}", lambda_share));
  }
  if (!(mu_share > 0.0 && mu_share < 1.0)) {
    throw DomainError(fmt::format("mu must lie in (0,1), got {}", mu_share));
  }
}

void TechLevels::validate() const {
  require_positive(A_i, "A_i");
  require_positive(A_h, "A_h");
  require_positive(A_u, "A_u");
}

double InputBundle::operator[](Input input) const {
  switch (input) {
    case Input::k_i: return k_i;
    case Input::k_o: return k_o;
    case Input::l_h: return l_h;
    case Input::l_u: return l_u;
  }
  return 0.0;
}

double& InputBundle::operator[](Input input) {
  switch (input) {
    case Input::k_i: return k_i;
    case Input::k_o: return k_o;
    case Input::l_h: return l_h;
    case Input::l_u: break;
  }
  return l_u;
}

void InputBundle::validate() const {
  require_positive(k_i, "k_i");
  require_positive(k_o, "k_o");
  require_positive(l_h, "l_h");
  require_positive(l_u, "l_u");
}

double PriceBundle::operator[](Input input) const {
  switch (input) {
    case Input::k_i: return r_i;
    case Input::k_o: return r_o;
    case Input::l_h: return w_h;
    case Input::l_u: return w_u;
  }
  return 0.0;
}

double& PriceBundle::operator[](Input input) {
  switch (input) {
    case Input::k_i: return r_i;
    case Input::k_o: return r_o;
    case Input::l_h: return w_h;
    case Input::l_u: break;
  }
  return w_u;
}

void PriceBundle::validate() const {
  require_positive(w_h, "w_h");
  require_positive(w_u, "w_u");
  require_positive(r_i, "r_i");
  require_positive(r_o, "r_o");
}

double WedgeBundle::operator[](Input input) const {
  switch (input) {
    case Input::k_i: return omega_i;
    case Input::k_o: return omega_o;
    case Input::l_h: return omega_h;
    case Input::l_u: return omega_u;
  }
  return 1.0;
}

void WedgeBundle::validate() const {
  require_positive(omega_h, "omega_h");
  require_positive(omega_u, "omega_u");
  require_positive(omega_i, "omega_i");
  require_positive(omega_o, "omega_o");
}

double produce_output(const ProductionParams& p, const InputBundle& x) {
  p.validate();
  x.validate();
  const double log_inner =
      log_add_exp(std::log(p.mu_share) + p.rho * std::log(x.k_i),
                  std::log1p(-p.mu_share) + p.rho * std::log(x.l_h));
  const double log_outer =
      log_add_exp(std::log(p.lambda_share) + (p.sigma / p.rho) * log_inner,
                  std::log1p(-p.lambda_share) + p.sigma * std::log(x.l_u));
  const double log_y = std::log(p.A) + p.alpha * std::log(x.k_o) +
                       ((1.0 - p.alpha) / p.sigma) * log_outer;
  return checked_exp(log_y, "output");
}

double produce_output(const ProductionParams& p, const TechLevels& tech,
                      const InputBundle& x) {
  validate_core(p);
  tech.validate();
  x.validate();
  return checked_exp(evaluate_nests(p.alpha, p.sigma, p.rho, tech, x).log_y, "output");
}

TechLevels tech_from_shares(const ProductionParams& p) {
  p.validate();
  const double log_scale = std::log(p.A) / (1.0 - p.alpha);
  const double log_lambda = std::log(p.lambda_share) / p.sigma;
  TechLevels t;
  t.A_i = checked_exp(log_scale + log_lambda + std::log(p.mu_share) / p.rho, "A_i");
  t.A_h = checked_exp(log_scale + log_lambda + std::log1p(-p.mu_share) / p.rho, "A_h");
  t.A_u = checked_exp(log_scale + std::log1p(-p.lambda_share) / p.sigma, "A_u");
  return t;
}

PriceBundle foc_prices(const ProductionParams& p, const InputBundle& x,
                       const WedgeBundle& wedges) {
  wedges.validate();
  x.validate();
  const TechLevels tech = tech_from_shares(p);
  const Nests n = evaluate_nests(p.alpha, p.sigma, p.rho, tech, x);
  checked_exp(n.log_y, "output");

  // Marginal products equal output times factor-income share over quantity.
  const double log_labor_part = std::log1p(-p.alpha) + n.log_y;
  const double log_skill_share = n.log_skill - n.log_outer;
  const double log_unsk_share = n.log_unsk - n.log_outer;

  PriceBundle out;
  out.r_i = wedges.omega_i *
            checked_exp(log_labor_part + log_skill_share + n.log_xi - n.log_inner -
                            std::log(x.k_i),
                        "r_i");
  out.w_h = wedges.omega_h *
            checked_exp(log_labor_part + log_skill_share + n.log_xh - n.log_inner -
                            std::log(x.l_h),
                        "w_h");
  out.w_u = wedges.omega_u *
            checked_exp(log_labor_part + log_unsk_share - std::log(x.l_u), "w_u");
  out.r_o = wedges.omega_o *
            checked_exp(std::log(p.alpha) + n.log_y - std::log(x.k_o), "r_o");
  return out;
}

double skill_premium_log(double sigma, double rho, const TechLevels& tech,
                         const InputBundle& x, double wedge_ratio_hu) {
  require_substitution(sigma, "sigma");
  require_substitution(rho, "rho");
  tech.validate();
  require_positive(x.k_i, "k_i");
  require_positive(x.l_h, "l_h");
  require_positive(x.l_u, "l_u");
  require_positive(wedge_ratio_hu, "wedge ratio omega_h/omega_u");
  const double log_ratio =
      std::log(tech.A_i) + std::log(x.k_i) - std::log(tech.A_h) - std::log(x.l_h);
  return sigma * (std::log(tech.A_h) - std::log(tech.A_u)) +
         ((sigma - rho) / rho) * numeric::log1p_exp(rho * log_ratio) -
         (1.0 - sigma) * (std::log(x.l_h) - std::log(x.l_u)) +
         std::log(wedge_ratio_hu);
}

double wage_rental_log(double rho, const TechLevels& tech, const InputBundle& x,
                       double wedge_ratio_hi) {
  if (!std::isfinite(rho) || !(rho < 1.0)) {
    throw DomainError(fmt::format("rho must be < 1, got {}", rho));
  }
  tech.validate();
  require_positive(x.k_i, "k_i");
  require_positive(x.l_h, "l_h");
  require_positive(wedge_ratio_hi, "wedge ratio omega_h/omega_i");
  return rho * (std::log(tech.A_h) - std::log(tech.A_i)) -
         (1.0 - rho) * (std::log(x.l_h) - std::log(x.k_i)) +
         std::log(wedge_ratio_hi);
}

InputBundle factor_demands(const ProductionParams& p, const TechLevels& tech,
                           const PriceBundle& prices, const WedgeBundle& wedges,
                           double y) {
  validate_core(p);
  tech.validate();
  prices.validate();
  wedges.validate();
  require_positive(y, "y");
  const double a = p.alpha;
  const double s = p.sigma;
  const double r = p.rho;

  // Wedge-adjusted prices equal marginal products.
  const double lp_i = std::log(prices.r_i) - std::log(wedges.omega_i);
  const double lp_h = std::log(prices.w_h) - std::log(wedges.omega_h);
  const double lp_u = std::log(prices.w_u) - std::log(wedges.omega_u);
  const double lp_o = std::log(prices.r_o) - std::log(wedges.omega_o);

  const double e_inner = r / (1.0 - r);
  const double e_outer = s / (1.0 - s);
  // B: price index of the (k_i, l_h) composite; C: of the labor-side composite.
  const double log_B = -((1.0 - r) / r) *
                       log_add_exp(e_inner * (std::log(tech.A_i) - lp_i),
                                   e_inner * (std::log(tech.A_h) - lp_h));
  const double log_C = -((1.0 - s) / s) *
                       log_add_exp(-e_outer * log_B,
                                   e_outer * (std::log(tech.A_u) - lp_u));
  if (!std::isfinite(log_B) || !std::isfinite(log_C)) {
    throw NumericalError("price composites are not finite");
  }

  const double log_ko_price = std::log1p(-a) + lp_o - std::log(a);
  const double common = std::log(y) + a * log_ko_price +
                        ((1.0 - a + a * s) / (1.0 - s)) * log_C;
  const double b_exp = (s - r) / ((1.0 - r) * (1.0 - s));

  InputBundle x;
  x.l_h = checked_exp(common - lp_h / (1.0 - r) + e_inner * std::log(tech.A_h) -
                          b_exp * log_B,
                      "l_h demand");
  x.k_i = checked_exp(common - lp_i / (1.0 - r) + e_inner * std::log(tech.A_i) -
                          b_exp * log_B,
                      "k_i demand");
  x.l_u = checked_exp(common - lp_u / (1.0 - s) + e_outer * std::log(tech.A_u),
                      "l_u demand");
  x.k_o = checked_exp(std::log(y) + (a - 1.0) * log_ko_price + (1.0 - a) * log_C,
                      "k_o demand");
  return x;
}

double relative_labor_demand_log(double sigma, double rho, const TechLevels& tech,
                                 const PriceBundle& prices,
                                 const WedgeBundle& wedges) {
  require_substitution(sigma, "sigma");
  require_substitution(rho, "rho");
  tech.validate();
  prices.validate();
  wedges.validate();
  const double e = rho / (1.0 - rho);
  const double log_wh = std::log(prices.w_h);
  const double log_wu = std::log(prices.w_u);
  const double log_ah_ai = std::log(tech.A_h) - std::log(tech.A_i);
  const double log_oh_oi = std::log(wedges.omega_h) - std::log(wedges.omega_i);
  const double log_oh_ou = std::log(wedges.omega_h) - std::log(wedges.omega_u);
  const double log_D =
      -((1.0 - rho) / rho) *
      log_add_exp(-e * std::log(prices.r_i), e * (log_oh_oi + log_ah_ai - log_wh));
  const double k = (sigma - rho) / ((1.0 - sigma) * (1.0 - rho));
  return -log_wh / (1.0 - rho) + log_wu / (1.0 - sigma) - k * log_D +
         (sigma * (std::log(tech.A_h) - std::log(tech.A_u)) + log_oh_ou) /
             (1.0 - sigma) -
         k * (log_ah_ai + log_oh_oi);
}

double morishima(Input a, Input b, const ProductionParams& params,
                 const TechLevels& tech, const PriceBundle& prices,
                 const WedgeBundle& wedges) {
  if (a == b) {
    throw DomainError(fmt::format("Morishima elasticity needs two distinct inputs, got {} twice",
                                  to_string(a)));
  }
  constexpr double kStep = 1e-6;
  PriceBundle up = prices;
  PriceBundle down = prices;
  up[b] = prices[b] * (1.0 + kStep);
  down[b] = prices[b] * (1.0 - kStep);
  // Demands are linear in y, so y = 1 loses nothing.
  const InputBundle x_up = factor_demands(params, tech, up, wedges, 1.0);
  const InputBundle x_dn = factor_demands(params, tech, down, wedges, 1.0);
  const double dlp = std::log1p(kStep) - std::log1p(-kStep);
  const double dxa = (std::log(x_up[a]) - std::log(x_dn[a])) / dlp;
  const double dxb = (std::log(x_up[b]) - std::log(x_dn[b])) / dlp;
  return dxa - dxb;
}

}  // namespace ces_skill
