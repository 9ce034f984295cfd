#pragma once

// Synthetic country-industry panels generated from known structural
// parameters, and a Monte Carlo harness for the estimator.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ces_skill/estimation.hpp"
#include "ces_skill/instruments.hpp"
#include "ces_skill/panel.hpp"

namespace ces_skill {

enum class WedgeProcess { iid_level, random_walk };

struct MarketValues {
  double h = 0.0;
  double u = 0.0;
  double i = 0.0;
  double o = 0.0;
};

struct SimConfig {
  std::uint64_t seed = 1;
  int countries = 14;
  int industries = 8;
  int first_year = 1980;
  int last_year = 2015;

  double alpha = 1.0 / 3.0;
  double sigma = 0.6;
  double rho = -0.3;

  // Trend truth around these centers; each country draws a perturbation of
  // width `trend_spread`. Orders vary across countries when `vary_orders`.
  double lambda1 = 0.2;
  double mu0 = -2.2;
  double mu1 = -0.3;
  double trend_spread = 0.05;
  bool vary_orders = true;

  // Annual log drifts of industry quantities and their dispersion.
  double drift_k_i = 0.10;
  double drift_l_h = 0.03;
  double drift_l_u = -0.01;
  double drift_k_o = 0.03;
  double industry_drift_sd = 0.02;
  double industry_shock_sd = 0.10;  // global industry random walk
  double cell_noise_sd = 0.01;      // iid country-industry noise
  double share_dispersion = 1.0;    // sd of log industry base levels

  // Log wedges: ln omega_j = level_j + shock, with shock iid N(0, sd_j^2)
  // per year (iid_level) or its running sum (random_walk).
  MarketValues wedge_sd;
  MarketValues wedge_level;
  WedgeProcess wedge_process = WedgeProcess::iid_level;

  void validate() const;
  std::vector<std::string> country_ids() const;
  std::vector<std::string> industry_ids() const;
};

struct TruthPathRow {
  std::string country;
  int year = 0;
  double lambda = 0.0;
  double mu = 0.0;
  double log_ah_au = 0.0;
  double log_ai_ah = 0.0;
  double log_wedge_hu = 0.0;  // ln(omega_h / omega_u)
  double log_wedge_hi = 0.0;  // ln(omega_h / omega_i)
};

struct SimResult {
  std::vector<CountryYearRecord> records;
  IndustryCellSeries industry;
  ThetaVector truth;
  TrendSpec trend_spec;
  std::vector<TruthPathRow> paths;
};

SimResult simulate_panel(const SimConfig& cfg);

// parameter,value rows: alpha, sigma, rho, then every trend coefficient.
void write_truth(std::ostream& out, const SimResult& sim, double alpha);
void write_truth_paths(std::ostream& out, const SimResult& sim);

struct MonteCarloOptions {
  InstrumentOptions instruments = InstrumentOptions::defaults_for(InstrumentKind::shift_share);
  GmmOptions gmm;
  std::size_t threads = 0;
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double mean_bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;            // 95% interval, clustered se
  double coverage_unclustered = 0.0;
  double mean_se = 0.0;
  double mean_se_unclustered = 0.0;
};

struct MonteCarloReplication {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double sigma = 0.0;
  double rho = 0.0;
  double se_sigma = 0.0;
  double se_rho = 0.0;
  double se_sigma_unclustered = 0.0;
  double se_rho_unclustered = 0.0;
  bool converged = false;
};

struct MonteCarloSummary {
  std::size_t replications = 0;
  std::size_t failures = 0;
  double failure_rate = 0.0;
  ParameterSummary sigma;
  ParameterSummary rho;
  std::vector<MonteCarloReplication> runs;
};

// Replication r uses seed splitmix64(cfg.seed ^ r); failures are recorded,
// not thrown.
MonteCarloSummary monte_carlo(const SimConfig& cfg, std::size_t replications,
                              const MonteCarloOptions& options = {});

void write_monte_carlo(std::ostream& out, const MonteCarloSummary& summary);

}  // namespace ces_skill
