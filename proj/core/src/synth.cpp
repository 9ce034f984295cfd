#include "ces_skill/synth.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "ces_skill/error.hpp"
#include "ces_skill/model.hpp"
#include "ces_skill/parallel.hpp"
#include "ces_skill/rng.hpp"

namespace ces_skill {
namespace {

enum Stream : std::uint64_t {
  kTrend = 1,
  kBase = 2,
  kDrift = 3,
  kShock = 4,
  kNoise = 5,
  kWedge = 6,
  kNonIct = 7,
};

enum Market : std::uint64_t { kH = 0, kU = 1, kI = 2, kO = 3 };

double signed_uniform(const rng::Key& key, std::uint64_t n) { return 2.0 * key.uniform(n) - 1.0; }

std::uint64_t year_key(int year) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(year)); }

}  // namespace

void SimConfig::validate() const {
  if (countries < 1) throw ValidationError("simulation needs at least one country");
  if (industries < 1) throw ValidationError("simulation needs at least one industry");
  if (last_year <= first_year) throw ValidationError("simulation needs at least two years");
  for (double sd : {industry_drift_sd, industry_shock_sd, cell_noise_sd, share_dispersion,
                    trend_spread, wedge_sd.h, wedge_sd.u, wedge_sd.i, wedge_sd.o}) {
    if (!(sd >= 0.0) || !std::isfinite(sd)) {
      throw ValidationError("simulation standard deviations must be finite and >= 0");
    }
  }
  ProductionParams p;
  p.alpha = alpha;
  p.sigma = sigma;
  p.rho = rho;
  p.validate();
}

std::vector<std::string> SimConfig::country_ids() const {
  std::vector<std::string> out;
  for (int c = 1; c <= countries; ++c) out.push_back(fmt::format("C{:02d}", c));
  return out;
}

std::vector<std::string> SimConfig::industry_ids() const {
  std::vector<std::string> out;
  for (int d = 1; d <= industries; ++d) out.push_back(fmt::format("D{:02d}", d));
  return out;
}

SimResult simulate_panel(const SimConfig& cfg) {
  cfg.validate();
  const auto countries = cfg.country_ids();
  const auto industries = cfg.industry_ids();
  const std::size_t n_years = static_cast<std::size_t>(cfg.last_year - cfg.first_year + 1);
  const std::array<double, 3> drift = {cfg.drift_k_i, cfg.drift_l_h, cfg.drift_l_u};
  const std::array<double, 3> scale = {2.0, 30.0, 100.0};

  SimResult sim;
  std::map<std::string, int> origins;
  for (std::size_t c = 0; c < countries.size(); ++c) {
    const TrendOrders o = cfg.vary_orders ? TrendOrders{c % 3 == 2 ? 2 : 1, c % 2 == 1 ? 2 : 1}
                                          : TrendOrders{1, 1};
    sim.trend_spec.countries[countries[c]] = o;
    origins[countries[c]] = cfg.first_year;
  }
  sim.truth = ThetaVector::zeros(sim.trend_spec, origins, cfg.sigma, cfg.rho);
  for (std::size_t c = 0; c < countries.size(); ++c) {
    const rng::Key key(cfg.seed, {kTrend, c});
    CountryTrend& t = sim.truth.trends[c];
    const double w = cfg.trend_spread;
    t.lambda[0] = cfg.lambda1 + w * signed_uniform(key, 0);
    if (t.lambda.size() > 1) t.lambda[1] = 0.5 * w * signed_uniform(key, 1);
    t.mu[0] = cfg.mu0 + 3.0 * w * signed_uniform(key, 2);
    t.mu[1] = cfg.mu1 + w * signed_uniform(key, 3);
    if (t.mu.size() > 2) t.mu[2] = 0.5 * w * signed_uniform(key, 4);
  }

  // Global industry paths: drift deviation plus random walk, per quantity.
  std::vector<std::array<std::vector<double>, 3>> global(industries.size());
  std::vector<std::array<double, 3>> industry_drift(industries.size());
  for (std::size_t d = 0; d < industries.size(); ++d) {
    for (std::uint64_t q = 0; q < 3; ++q) {
      industry_drift[d][q] =
          drift[q] + cfg.industry_drift_sd * rng::Key(cfg.seed, {kDrift, d, q}).normal();
      auto& path = global[d][q];
      path.assign(n_years, 0.0);
      for (std::size_t y = 1; y < n_years; ++y) {
        const int year = cfg.first_year + static_cast<int>(y);
        path[y] = path[y - 1] +
                  cfg.industry_shock_sd * rng::Key(cfg.seed, {kShock, d, q, year_key(year)}).normal();
      }
    }
  }

  const auto wedge_shock = [&](std::size_t c, Market m, int year) {
    const double sd = m == kH ? cfg.wedge_sd.h : m == kU ? cfg.wedge_sd.u
                                         : m == kI ? cfg.wedge_sd.i : cfg.wedge_sd.o;
    if (sd == 0.0) return 0.0;
    return sd * rng::Key(cfg.seed, {kWedge, c, m, year_key(year)}).normal();
  };

  ProductionParams params;
  params.alpha = cfg.alpha;
  params.sigma = cfg.sigma;
  params.rho = cfg.rho;
  params.A = 1.0;

  for (std::size_t c = 0; c < countries.size(); ++c) {
    std::array<std::vector<double>, 3> base;
    for (std::uint64_t q = 0; q < 3; ++q) {
      for (std::size_t d = 0; d < industries.size(); ++d) {
        base[q].push_back(scale[q] / static_cast<double>(industries.size()) *
                          std::exp(cfg.share_dispersion * rng::Key(cfg.seed, {kBase, c, d, q}).normal()));
      }
    }
    std::array<double, 4> walk = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t y = 0; y < n_years; ++y) {
      const int year = cfg.first_year + static_cast<int>(y);
      const double t = static_cast<double>(y);
      CountryYearRecord rec;
      rec.country = countries[c];
      rec.year = year;
      std::array<double, 3> total = {0.0, 0.0, 0.0};
      for (std::size_t d = 0; d < industries.size(); ++d) {
        IndustryCell cell;
        cell.country = countries[c];
        cell.industry = industries[d];
        cell.year = year;
        std::array<double, 3> v{};
        for (std::uint64_t q = 0; q < 3; ++q) {
          const double noise =
              cfg.cell_noise_sd * rng::Key(cfg.seed, {kNoise, c, d, q, year_key(year)}).normal();
          v[q] = base[q][d] * std::exp(industry_drift[d][q] * t + global[d][q][y] + noise);
          total[q] += v[q];
        }
        cell.k_i = v[0];
        cell.l_h = v[1];
        cell.l_u = v[2];
        sim.industry.push_back(std::move(cell));
      }
      rec.k_i = total[0];
      rec.l_h = total[1];
      rec.l_u = total[2];
      rec.k_o = 50.0 * std::exp(cfg.drift_k_o * t +
                                0.01 * rng::Key(cfg.seed, {kNonIct, c, year_key(year)}).normal());

      std::array<double, 4> log_wedge{};
      const std::array<double, 4> level = {cfg.wedge_level.h, cfg.wedge_level.u,
                                           cfg.wedge_level.i, cfg.wedge_level.o};
      for (Market m : {kH, kU, kI, kO}) {
        const double shock = wedge_shock(c, m, year);
        if (cfg.wedge_process == WedgeProcess::random_walk) {
          walk[m] += shock;
          log_wedge[m] = level[m] + walk[m];
        } else {
          log_wedge[m] = level[m] + shock;
        }
      }
      const WedgeBundle wedges{std::exp(log_wedge[kH]), std::exp(log_wedge[kU]),
                               std::exp(log_wedge[kI]), std::exp(log_wedge[kO])};

      const auto [lt, mt] = trend_logits(sim.truth.trends[c], year);
      const ShareParams shares = eval_share_params(sim.truth, countries[c], year);
      params.lambda_share = shares.lambda;
      params.mu_share = shares.mu;
      const PriceBundle prices =
          foc_prices(params, InputBundle{rec.k_i, rec.k_o, rec.l_h, rec.l_u}, wedges);
      rec.w_h = prices.w_h;
      rec.w_u = prices.w_u;
      rec.r_i = prices.r_i;
      rec.r_o = prices.r_o;
      sim.records.push_back(rec);

      sim.paths.push_back({countries[c], year, shares.lambda, shares.mu,
                           log_tech_ratio_hu(cfg.sigma, cfg.rho, lt, mt),
                           log_tech_ratio_ih(cfg.rho, mt), log_wedge[kH] - log_wedge[kU],
                           log_wedge[kH] - log_wedge[kI]});
    }
  }
  return sim;
}

void write_truth(std::ostream& out, const SimResult& sim, double alpha) {
  csv::Writer w(out);
  w.row({"parameter", "value"});
  w.row({"alpha", csv::format_double(alpha)});
  const auto names = sim.truth.names();
  const Eigen::VectorXd x = sim.truth.flatten();
  for (std::size_t i = 0; i < names.size(); ++i) {
    w.row({names[i], csv::format_double(x(static_cast<Eigen::Index>(i)))});
  }
  for (const auto& t : sim.truth.trends) {
    w.row({"lambda_0:" + t.country, csv::format_double(t.lambda0)});
  }
}

void write_truth_paths(std::ostream& out, const SimResult& sim) {
  csv::Writer w(out);
  w.row({"country", "year", "lambda", "mu", "ln_ah_au", "ln_ai_ah", "ln_wedge_hu",
         "ln_wedge_hi"});
  for (const auto& p : sim.paths) {
    w.row({p.country, std::to_string(p.year), csv::format_double(p.lambda),
           csv::format_double(p.mu), csv::format_double(p.log_ah_au),
           csv::format_double(p.log_ai_ah), csv::format_double(p.log_wedge_hu),
           csv::format_double(p.log_wedge_hi)});
  }
}

MonteCarloSummary monte_carlo(const SimConfig& cfg, std::size_t replications,
                              const MonteCarloOptions& options) {
  if (replications < 1) throw ValidationError("monte_carlo needs at least one replication");
  cfg.validate();
  MonteCarloSummary out;
  out.replications = replications;
  out.runs.resize(replications);
  GmmOptions gmm = options.gmm;
  gmm.threads = 1;
  parallel::for_each_index(
      replications,
      [&](std::size_t r) {
        MonteCarloReplication& run = out.runs[r];
        run.index = r;
        run.seed = rng::splitmix64(cfg.seed ^ static_cast<std::uint64_t>(r));
        try {
          SimConfig c = cfg;
          c.seed = run.seed;
          const SimResult sim = simulate_panel(c);
          const IndustryPanel panel(sim.industry);
          const InstrumentSeries inst = build_instruments(panel, options.instruments);
          const GmmResult res = gmm_estimate(sim.records, inst, sim.trend_spec, gmm);
          run.sigma = res.theta.sigma;
          run.rho = res.theta.rho;
          run.se_sigma = res.se(0);
          run.se_rho = res.se(1);
          run.se_sigma_unclustered = std::sqrt(std::max(res.covariance_unclustered(0, 0), 0.0));
          run.se_rho_unclustered = std::sqrt(std::max(res.covariance_unclustered(1, 1), 0.0));
          run.converged = res.report.converged;
          run.ok = std::isfinite(run.sigma) && std::isfinite(run.rho);
          if (!run.ok) run.error = "non-finite estimate";
        } catch (const std::exception& e) {
          run.ok = false;
          run.error = e.what();
        }
      },
      options.threads);

  const auto summarize = [&](const std::string& name, double truth, auto estimate, auto se,
                             auto se_u) {
    ParameterSummary s;
    s.name = name;
    s.truth = truth;
    std::size_t n = 0;
    double sum = 0.0, sq = 0.0, cover = 0.0, cover_u = 0.0, se_sum = 0.0, se_u_sum = 0.0;
    for (const auto& run : out.runs) {
      if (!run.ok) continue;
      ++n;
      const double e = estimate(run) - truth;
      sum += estimate(run);
      sq += e * e;
      cover += std::abs(e) <= 1.959963984540054 * se(run) ? 1.0 : 0.0;
      cover_u += std::abs(e) <= 1.959963984540054 * se_u(run) ? 1.0 : 0.0;
      se_sum += se(run);
      se_u_sum += se_u(run);
    }
    if (n > 0) {
      const double dn = static_cast<double>(n);
      s.mean_estimate = sum / dn;
      s.mean_bias = s.mean_estimate - truth;
      s.rmse = std::sqrt(sq / dn);
      s.coverage = cover / dn;
      s.coverage_unclustered = cover_u / dn;
      s.mean_se = se_sum / dn;
      s.mean_se_unclustered = se_u_sum / dn;
    }
    return s;
  };
  for (const auto& run : out.runs) out.failures += run.ok ? 0 : 1;
  out.failure_rate = static_cast<double>(out.failures) / static_cast<double>(replications);
  out.sigma = summarize(
      "sigma", cfg.sigma, [](const auto& r) { return r.sigma; },
      [](const auto& r) { return r.se_sigma; }, [](const auto& r) { return r.se_sigma_unclustered; });
  out.rho = summarize(
      "rho", cfg.rho, [](const auto& r) { return r.rho; }, [](const auto& r) { return r.se_rho; },
      [](const auto& r) { return r.se_rho_unclustered; });
  return out;
}

void write_monte_carlo(std::ostream& out, const MonteCarloSummary& s) {
  csv::Writer w(out);
  w.comment(fmt::format("replications={} failures={} failure_rate={}", s.replications,
                        s.failures, csv::format_double(s.failure_rate)));
  w.row({"parameter", "truth", "mean_estimate", "mean_bias", "rmse", "coverage",
         "coverage_unclustered", "mean_se", "mean_se_unclustered"});
  for (const ParameterSummary* p : {&s.sigma, &s.rho}) {
    w.row({p->name, csv::format_double(p->truth), csv::format_double(p->mean_estimate),
           csv::format_double(p->mean_bias), csv::format_double(p->rmse),
           csv::format_double(p->coverage), csv::format_double(p->coverage_unclustered),
           csv::format_double(p->mean_se), csv::format_double(p->mean_se_unclustered)});
  }
}

}  // namespace ces_skill
