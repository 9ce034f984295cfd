#include "ces_skill/decomposition.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>

#include "ces_skill/error.hpp"
#include "ces_skill/model.hpp"
#include "ces_skill/numeric.hpp"
#include "ces_skill/shapley.hpp"

namespace ces_skill {
namespace {

constexpr std::array<PremiumFactor, kPremiumFactors> kAllPremiumFactors = {
    PremiumFactor::k_i,  PremiumFactor::l_h_csc, PremiumFactor::l_h_rlq,
    PremiumFactor::l_u,  PremiumFactor::tech_hu, PremiumFactor::tech_ih};

constexpr std::array<DemandFactor, kDemandFactors> kAllDemandFactors = {
    DemandFactor::r_i, DemandFactor::w_h, DemandFactor::w_u, DemandFactor::tech_hu,
    DemandFactor::tech_ih};

const CountryYearRecord& record_at(const std::vector<CountryYearRecord>& panel,
                                   const std::string& country, int year) {
  for (const auto& r : panel) {
    if (r.country == country && r.year == year) return r;
  }
  throw ValidationError(fmt::format("no panel record for ({}, {})", country, year));
}

void check_window(const Window& w) {
  if (w.to_year <= w.from_year) {
    throw ValidationError(
        fmt::format("window end {} must follow its start {}", w.to_year, w.from_year));
  }
}

std::vector<std::string> premium_labels() {
  std::vector<std::string> out;
  for (auto f : kAllPremiumFactors) out.emplace_back(to_string(f));
  return out;
}

}  // namespace

std::string_view to_string(PremiumFactor f) {
  switch (f) {
    case PremiumFactor::k_i: return "k_i";
    case PremiumFactor::l_h_csc: return "l_h_csc";
    case PremiumFactor::l_h_rlq: return "l_h_rlq";
    case PremiumFactor::l_u: return "l_u";
    case PremiumFactor::tech_hu: return "ln_ah_au";
    case PremiumFactor::tech_ih: return "ln_ai_ah";
  }
  return "?";
}

std::string_view effect_group(PremiumFactor f) {
  switch (f) {
    case PremiumFactor::k_i:
    case PremiumFactor::l_h_csc: return "csc";
    case PremiumFactor::l_h_rlq:
    case PremiumFactor::l_u: return "rlq";
    case PremiumFactor::tech_hu:
    case PremiumFactor::tech_ih: return "rlat";
  }
  return "?";
}

std::string_view to_string(DemandFactor f) {
  switch (f) {
    case DemandFactor::r_i: return "r_i";
    case DemandFactor::w_h: return "w_h";
    case DemandFactor::w_u: return "w_u";
    case DemandFactor::tech_hu: return "ln_ah_au";
    case DemandFactor::tech_ih: return "ln_ai_ah";
  }
  return "?";
}

double PremiumFactors::get(PremiumFactor f) const {
  switch (f) {
    case PremiumFactor::k_i: return ln_k_i;
    case PremiumFactor::l_h_csc: return ln_l_h_csc;
    case PremiumFactor::l_h_rlq: return ln_l_h_rlq;
    case PremiumFactor::l_u: return ln_l_u;
    case PremiumFactor::tech_hu: return ln_ah_au;
    case PremiumFactor::tech_ih: return ln_ai_ah;
  }
  return 0.0;
}

void PremiumFactors::set(PremiumFactor f, double v) {
  switch (f) {
    case PremiumFactor::k_i: ln_k_i = v; break;
    case PremiumFactor::l_h_csc: ln_l_h_csc = v; break;
    case PremiumFactor::l_h_rlq: ln_l_h_rlq = v; break;
    case PremiumFactor::l_u: ln_l_u = v; break;
    case PremiumFactor::tech_hu: ln_ah_au = v; break;
    case PremiumFactor::tech_ih: ln_ai_ah = v; break;
  }
}

double premium_from_factors(double sigma, double rho, const PremiumFactors& f) {
  const double inner = f.ln_ai_ah + f.ln_k_i - f.ln_l_h_csc;
  return sigma * f.ln_ah_au + ((sigma - rho) / rho) * numeric::log1p_exp(rho * inner) -
         (1.0 - sigma) * (f.ln_l_h_rlq - f.ln_l_u);
}

PremiumFactors premium_factors(const ThetaVector& theta, const CountryYearRecord& r) {
  if (!(r.k_i > 0.0 && r.l_h > 0.0 && r.l_u > 0.0)) {
    throw DomainError(fmt::format("nonpositive quantity at ({}, {})", r.country, r.year));
  }
  const auto [lt, mt] = trend_logits(theta.trend(r.country), r.year);
  PremiumFactors f;
  f.ln_k_i = std::log(r.k_i);
  f.ln_l_h_csc = std::log(r.l_h);
  f.ln_l_h_rlq = f.ln_l_h_csc;
  f.ln_l_u = std::log(r.l_u);
  f.ln_ah_au = log_tech_ratio_hu(theta.sigma, theta.rho, lt, mt);
  f.ln_ai_ah = log_tech_ratio_ih(theta.rho, mt);
  return f;
}

DecompositionReport decompose_skill_premium(const std::string& country,
                                            const ThetaVector& theta,
                                            const std::vector<CountryYearRecord>& panel,
                                            const Window& window) {
  check_window(window);
  if (theta.rho == 0.0) throw DomainError("rho must be nonzero");
  const CountryYearRecord& a = record_at(panel, country, window.from_year);
  const CountryYearRecord& b = record_at(panel, country, window.to_year);
  const PremiumFactors start = premium_factors(theta, a);
  const PremiumFactors end = premium_factors(theta, b);
  const auto eval = [&](std::uint32_t mask) {
    PremiumFactors f = start;
    for (std::size_t k = 0; k < kPremiumFactors; ++k) {
      if (mask & (1u << k)) f.set(kAllPremiumFactors[k], end.get(kAllPremiumFactors[k]));
    }
    return premium_from_factors(theta.sigma, theta.rho, f);
  };
  const ShapleyResult sh = shapley(eval, kPremiumFactors, premium_labels());

  DecompositionReport rep;
  rep.country = country;
  rep.window = window;
  for (std::size_t k = 0; k < kPremiumFactors; ++k) {
    const PremiumFactor f = kAllPremiumFactors[k];
    const double c = sh.contributions[k];
    rep.factors.push_back({std::string(to_string(f)), std::string(effect_group(f)), c});
    const auto group = effect_group(f);
    if (group == "csc") rep.csc += c;
    if (group == "rlq") rep.rlq += c;
    if (group == "rlat") rep.rlat += c;
  }
  rep.predicted = sh.total();
  rep.actual = (std::log(b.w_h) - std::log(b.w_u)) - (std::log(a.w_h) - std::log(a.w_u));
  rep.residual = rep.actual - rep.predicted;
  return rep;
}

CrossCountryReport decompose_cross_country(const std::string& base_country,
                                           const std::string& other_country,
                                           const ThetaVector& theta,
                                           const std::vector<CountryYearRecord>& panel,
                                           const Window& window) {
  const auto covers = [&](const std::string& c) {
    bool from = false, to = false;
    for (const auto& r : panel) {
      if (r.country != c) continue;
      from = from || r.year == window.from_year;
      to = to || r.year == window.to_year;
    }
    return from && to;
  };
  for (const auto* c : {&base_country, &other_country}) {
    if (!covers(*c)) {
      throw ValidationError(fmt::format("country {} does not cover the window {}-{}", *c,
                                        window.from_year, window.to_year));
    }
  }
  const DecompositionReport base =
      decompose_skill_premium(base_country, theta, panel, window);
  const DecompositionReport other =
      decompose_skill_premium(other_country, theta, panel, window);

  CrossCountryReport rep;
  rep.base_country = base_country;
  rep.other_country = other_country;
  rep.window = window;
  rep.data_difference = base.actual - other.actual;
  rep.model_difference = base.predicted - other.predicted;
  rep.residual_difference = base.residual - other.residual;
  const auto diff = [&](std::size_t k) {
    return base.factors[k].contribution - other.factors[k].contribution;
  };
  const auto share = [&](double d) -> std::optional<double> {
    if (std::abs(rep.model_difference) < 1e-12) return std::nullopt;
    return d / rep.model_difference;
  };
  const double d_ki = diff(0);
  const double d_lh = diff(1) + diff(2);
  const double d_lu = diff(3);
  rep.rows.push_back({"k_i", d_ki, share(d_ki)});
  rep.rows.push_back({"l_h", d_lh, share(d_lh)});
  rep.rows.push_back({"l_u", d_lu, share(d_lu)});
  rep.rows.push_back({"ln_ah_au", diff(4), std::nullopt});
  rep.rows.push_back({"ln_ai_ah", diff(5), std::nullopt});
  return rep;
}

LaborDemandReport decompose_labor_demand(const std::string& country,
                                         const ThetaVector& theta,
                                         const std::vector<CountryYearRecord>& panel,
                                         const Window& window) {
  check_window(window);
  const CountryYearRecord& a = record_at(panel, country, window.from_year);
  const CountryYearRecord& b = record_at(panel, country, window.to_year);
  const auto wedges = wedge_residuals(theta, {a});
  const WedgeBundle held{1.0, std::exp(-wedges[0].log_hu), std::exp(-wedges[0].log_hi), 1.0};

  struct Values {
    std::array<double, kDemandFactors> v;
  };
  const auto values = [&](const CountryYearRecord& r) {
    const auto [lt, mt] = trend_logits(theta.trend(r.country), r.year);
    return Values{{std::log(r.r_i), std::log(r.w_h), std::log(r.w_u),
                   log_tech_ratio_hu(theta.sigma, theta.rho, lt, mt),
                   log_tech_ratio_ih(theta.rho, mt)}};
  };
  const Values start = values(a);
  const Values end = values(b);
  const auto eval = [&](std::uint32_t mask) {
    std::array<double, kDemandFactors> v = start.v;
    for (std::size_t k = 0; k < kDemandFactors; ++k) {
      if (mask & (1u << k)) v[k] = end.v[k];
    }
    PriceBundle p;
    p.r_i = std::exp(v[0]);
    p.w_h = std::exp(v[1]);
    p.w_u = std::exp(v[2]);
    const TechLevels tech{std::exp(v[4]), 1.0, std::exp(-v[3])};
    return relative_labor_demand_log(theta.sigma, theta.rho, tech, p, held);
  };
  std::vector<std::string> labels;
  for (auto f : kAllDemandFactors) labels.emplace_back(to_string(f));
  const ShapleyResult sh = shapley(eval, kDemandFactors, labels);

  LaborDemandReport rep;
  rep.country = country;
  rep.window = window;
  for (std::size_t k = 0; k < kDemandFactors; ++k) {
    const DemandFactor f = kAllDemandFactors[k];
    const std::string group =
        f == DemandFactor::tech_hu || f == DemandFactor::tech_ih ? "technology" : "price";
    rep.factors.push_back({std::string(to_string(f)), group, sh.contributions[k]});
  }
  rep.predicted = sh.total();
  rep.actual = (std::log(b.l_h) - std::log(b.l_u)) - (std::log(a.l_h) - std::log(a.l_u));
  rep.residual = rep.actual - rep.predicted;
  return rep;
}

EducationEffect education_effect(const std::string& country, const ThetaVector& theta,
                                 const std::vector<CountryYearRecord>& panel,
                                 const Window& window) {
  const DecompositionReport rep = decompose_skill_premium(country, theta, panel, window);
  EducationEffect e;
  e.csc = rep.factors[1].contribution;
  e.rlq = rep.factors[2].contribution;
  e.total = e.csc + e.rlq;
  if (std::abs(e.rlq) >= 1e-12) e.ratio = e.total / e.rlq;
  return e;
}

std::vector<EffectSeriesRow> effect_series(const ThetaVector& theta,
                                           const std::vector<CountryYearRecord>& panel) {
  std::vector<EffectSeriesRow> out;
  for (const auto& [country, rows] : by_country(panel)) {
    double mean_hu = 0.0, mean_ih = 0.0;
    for (const auto& r : rows) {
      const PremiumFactors f = premium_factors(theta, r);
      mean_hu += f.ln_ah_au;
      mean_ih += f.ln_ai_ah;
    }
    mean_hu /= static_cast<double>(rows.size());
    mean_ih /= static_cast<double>(rows.size());
    const auto observed = [&](const CountryYearRecord& r) {
      PremiumFactors f = premium_factors(theta, r);
      f.ln_ah_au = mean_hu;
      f.ln_ai_ah = mean_ih;
      return premium_from_factors(theta.sigma, theta.rho, f);
    };
    const CountryYearRecord& first = rows.front();
    const double base_observed = observed(first);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const DecompositionReport rep =
          decompose_skill_premium(country, theta, panel, {first.year, rows[i].year});
      out.push_back({country, rows[i].year, rep.csc, rep.rlq, rep.rlat, rep.residual, rep.actual,
                     observed(rows[i]) - base_observed});
    }
  }
  return out;
}

}  // namespace ces_skill
