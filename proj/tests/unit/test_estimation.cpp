#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ces_skill/error.hpp"
#include "ces_skill/estimation.hpp"
#include "ces_skill/numeric.hpp"
#include "ces_skill/synth.hpp"

using namespace ces_skill;

namespace {

struct Fixture {
  SimResult sim;
  InstrumentSeries inst;
};

const Fixture& noiseless() {
  static const Fixture f = [] {
    Fixture out;
    out.sim = simulate_panel(SimConfig{});
    out.inst = build_instruments(IndustryPanel(out.sim.industry), {});
    return out;
  }();
  return f;
}

const GmmResult& noiseless_estimate() {
  static const GmmResult r = gmm_estimate(noiseless().sim.records, noiseless().inst,
                                          noiseless().sim.trend_spec);
  return r;
}

GmmOptions single_start(double sigma, double rho) {
  GmmOptions o;
  o.starts = {{sigma, rho}};
  return o;
}

TrendSpec parse_spec(const std::string& text) {
  std::istringstream in(text);
  return TrendSpec::parse(in, "trends.cfg");
}

std::string rename(const std::string& c) { return "X" + std::string(c.rbegin(), c.rend()); }

}  // namespace

TEST(TrendSpec, ParseAndWriteRoundTrip) {
  const TrendSpec s = parse_spec("# orders\ndefault.lambda = 2\ndefault.mu=0\nFI.lambda = 3\n");
  EXPECT_EQ(s.fallback, (TrendOrders{2, 0}));
  EXPECT_EQ(s.for_country("FI"), (TrendOrders{3, 0}));
  EXPECT_EQ(s.for_country("US"), (TrendOrders{2, 0}));
  std::stringstream ss;
  s.write(ss);
  const TrendSpec back = TrendSpec::parse(ss, "again");
  EXPECT_EQ(back.fallback, s.fallback);
  EXPECT_EQ(back.countries, s.countries);
}

TEST(TrendSpec, RejectsBadInput) {
  EXPECT_THROW(parse_spec("US.lambda = 4\n"), ValidationError);
  EXPECT_THROW(parse_spec("US.lambda 2\n"), ParseError);
  EXPECT_THROW(parse_spec("US.gamma = 1\n"), ParseError);
  EXPECT_THROW(parse_spec("US.mu = x\n"), ParseError);
}

TEST(ShareParams, ClosedForms) {
  ThetaVector t = ThetaVector::zeros({}, {{"US", 1990}}, 0.5, -0.5);
  const ShareParams a = eval_share_params(t, "US", 2000);
  EXPECT_DOUBLE_EQ(a.lambda, 0.5);
  EXPECT_DOUBLE_EQ(a.mu, 0.5);
  t.trend("US").mu[0] = std::log(3.0);
  EXPECT_NEAR(eval_share_params(t, "US", 2000).mu, 0.75, 1e-15);
}

TEST(ShareParams, MonotoneAndStrictlyInside) {
  ThetaVector t = ThetaVector::zeros({}, {{"US", 1990}}, 0.5, -0.5);
  t.trend("US").lambda[0] = 0.4;
  t.trend("US").mu[1] = 0.2;
  double prev_l = 0.0, prev_m = 0.0;
  for (int y = 1990; y < 2030; ++y) {
    const ShareParams s = eval_share_params(t, "US", y);
    EXPECT_GT(s.lambda, prev_l);
    EXPECT_GT(s.mu, prev_m);
    prev_l = s.lambda;
    prev_m = s.mu;
  }
  t.trend("US").mu[0] = 1e4;
  const ShareParams s = eval_share_params(t, "US", 1990);
  EXPECT_LT(s.mu, 1.0);
  t.trend("US").mu[0] = -1e4;
  EXPECT_GT(eval_share_params(t, "US", 1990).mu, 0.0);
}

TEST(ResidualSystem, VanishAtTruthOnNoiselessData) {
  const auto& f = noiseless();
  const auto rows = residual_system(f.sim.truth, f.sim.records, 5);
  ASSERT_EQ(rows.size(), 14u * 31u);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.v1, 0.0, 1e-10);
    EXPECT_NEAR(r.v2, 0.0, 1e-10);
  }
}

TEST(ResidualSystem, SigmaEntersOnlyTheFirstEquation) {
  const auto& f = noiseless();
  ThetaVector t = f.sim.truth;
  t.sigma += 0.01;
  const auto base = residual_system(f.sim.truth, f.sim.records, 5);
  const auto bumped = residual_system(t, f.sim.records, 5);
  double max_v1 = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    max_v1 = std::max(max_v1, std::abs(bumped[i].v1 - base[i].v1));
    EXPECT_EQ(bumped[i].v2, base[i].v2);
  }
  EXPECT_GT(max_v1, 1e-6);
}

TEST(ResidualSystem, CountryCoefficientsAreLocal) {
  const auto& f = noiseless();
  ThetaVector t = f.sim.truth;
  t.trend("C03").mu[1] += 0.05;
  const auto base = residual_system(f.sim.truth, f.sim.records, 5);
  const auto bumped = residual_system(t, f.sim.records, 5);
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i].country == "C03") {
      EXPECT_NE(bumped[i].v2, base[i].v2);
    } else {
      EXPECT_EQ(bumped[i].v1, base[i].v1);
      EXPECT_EQ(bumped[i].v2, base[i].v2);
    }
  }
}

TEST(ResidualSystem, HorizonErrors) {
  const auto& f = noiseless();
  EXPECT_THROW(residual_system(f.sim.truth, f.sim.records, 0), ValidationError);
  EXPECT_THROW(residual_system(f.sim.truth, f.sim.records, 40), ValidationError);
}

TEST(WedgeResiduals, InjectedWedgeIsRecovered) {
  SimConfig cfg;
  cfg.wedge_level.h = 0.05;
  const SimResult sim = simulate_panel(cfg);
  for (const auto& w : wedge_residuals(sim.truth, sim.records)) {
    EXPECT_NEAR(w.log_hu, 0.05, 1e-10);
    EXPECT_NEAR(w.log_hi, 0.05, 1e-10);
  }
}

TEST(WedgeResiduals, InvariantToCommonWageScaling) {
  const auto& f = noiseless();
  auto scaled = f.sim.records;
  for (auto& r : scaled) {
    r.w_h *= 2.5;
    r.w_u *= 2.5;
  }
  const auto a = wedge_residuals(f.sim.truth, f.sim.records);
  const auto b = wedge_residuals(f.sim.truth, scaled);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].log_hu, b[i].log_hu, 1e-12);
}

TEST(MomentSet, AveragesInstrumentTimesResidual) {
  const auto& f = noiseless();
  const MomentProblem p(f.sim.records, f.inst, f.sim.trend_spec);
  Eigen::VectorXd x = f.sim.truth.flatten();
  x(0) += 0.02;
  x(1) -= 0.03;
  const MomentSet m = p.moment_set(x);
  ASSERT_EQ(m.names.size(), p.moments());
  const double n = static_cast<double>(m.observations());
  for (Eigen::Index k = 0; k < m.z.cols(); ++k) {
    const Eigen::VectorXd& v = m.equation[static_cast<std::size_t>(k)] == 1 ? m.v1 : m.v2;
    EXPECT_NEAR(m.g(k), m.z.col(k).dot(v) / n, 1e-14);
  }
  EXPECT_LT((m.g - p.g(x)).norm(), 1e-14);
}

TEST(MomentSet, ConstantTrendTermGivesCountryResidualMean) {
  const auto& f = noiseless();
  const MomentProblem p(f.sim.records, f.inst, f.sim.trend_spec);
  Eigen::VectorXd x = f.sim.truth.flatten();
  x(0) = 0.3;
  const MomentSet m = p.moment_set(x);
  const auto it = std::find(m.names.begin(), m.names.end(), "eq1:tau0:C05");
  ASSERT_NE(it, m.names.end());
  const auto k = static_cast<Eigen::Index>(it - m.names.begin());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m.v1.size(); ++i) {
    if (m.country[static_cast<std::size_t>(i)] == "C05") sum += m.v1(i);
  }
  EXPECT_NEAR(m.g(k), sum / static_cast<double>(m.observations()), 1e-14);
}

TEST(MomentSet, ZeroAtTruth) {
  const auto& f = noiseless();
  const MomentProblem p(f.sim.records, f.inst, f.sim.trend_spec);
  EXPECT_LT(p.g(f.sim.truth.flatten()).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(MomentProblem, AlignmentAndCountErrors) {
  const auto& f = noiseless();
  InstrumentSeries early = f.inst;
  early.rows[3].year = 1981;  // its lag year is outside the panel
  EXPECT_THROW(MomentProblem(f.sim.records, early, f.sim.trend_spec), ValidationError);
  InstrumentSeries ragged = f.inst;
  ragged.rows[0].values.push_back(0.0);
  EXPECT_THROW(MomentProblem(f.sim.records, ragged, f.sim.trend_spec), ValidationError);
  InstrumentSeries dropped = f.inst;
  dropped.rows.erase(dropped.rows.begin() + 3);
  EXPECT_EQ(MomentProblem(f.sim.records, dropped, f.sim.trend_spec).observations(),
            f.inst.rows.size() - 1);
  InstrumentSeries none = f.inst;
  none.names.clear();
  none.equation.clear();
  for (auto& r : none.rows) r.values.clear();
  EXPECT_THROW(MomentProblem(f.sim.records, none, f.sim.trend_spec), ValidationError);
}

TEST(GmmEstimate, RecoversTruthOnNoiselessData) {
  const GmmResult& r = noiseless_estimate();
  const ThetaVector& truth = noiseless().sim.truth;
  EXPECT_NEAR(r.theta.sigma, truth.sigma, 1e-6);
  EXPECT_NEAR(r.theta.rho, truth.rho, 1e-6);
  const Eigen::VectorXd dx = r.x - truth.flatten();
  EXPECT_LT(dx.lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_EQ(r.J_df, 0);
  EXPECT_FALSE(r.J_pvalue.has_value());
  EXPECT_TRUE(r.report.converged);
  EXPECT_TRUE(r.few_clusters);
  EXPECT_EQ(r.names, truth.names());
}

TEST(GmmEstimate, ObjectiveNeverIncreases) {
  const auto& h = noiseless_estimate().report.history;
  ASSERT_FALSE(h.empty());
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1]);
  EXPECT_GE(noiseless_estimate().objective, 0.0);
}

TEST(GmmEstimate, CovarianceSymmetricPsd) {
  SimConfig cfg;
  cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
  const SimResult sim = simulate_panel(cfg);
  const InstrumentSeries inst = build_instruments(IndustryPanel(sim.industry), {});
  const GmmResult r = gmm_estimate(sim.records, inst, sim.trend_spec, single_start(0.6, -0.3));
  for (const Eigen::MatrixXd* V : {&r.covariance, &r.covariance_unclustered}) {
    EXPECT_LT((*V - V->transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (*V + V->transpose()));
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()));
  }
  EXPECT_GT(r.se(0), 0.0);
  EXPECT_GT(r.se(1), 0.0);
  EXPECT_GE(r.J, 0.0);
}

TEST(GmmEstimate, JustIdentifiedIgnoresWeight) {
  SimConfig cfg;
  cfg.countries = 6;
  cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
  const SimResult sim = simulate_panel(cfg);
  const InstrumentSeries inst = build_instruments(IndustryPanel(sim.industry), {});
  const GmmResult a = gmm_estimate(sim.records, inst, sim.trend_spec, single_start(0.3, -0.2));
  std::mt19937_64 gen(5);
  std::normal_distribution<> nd;
  const auto M = static_cast<Eigen::Index>(a.moments);
  Eigen::MatrixXd B(M, M);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < M; ++j) B(i, j) = nd(gen);
  GmmOptions o = single_start(0.3, -0.2);
  o.weight = B * B.transpose() + Eigen::MatrixXd::Identity(M, M);
  const GmmResult b = gmm_estimate(sim.records, inst, sim.trend_spec, o);
  EXPECT_NEAR(a.theta.sigma, b.theta.sigma, 1e-6);
  EXPECT_NEAR(a.theta.rho, b.theta.rho, 1e-6);
}

TEST(GmmEstimate, InvariantToRelabelingAndReordering) {
  SimConfig cfg;
  cfg.countries = 6;
  cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
  const SimResult sim = simulate_panel(cfg);
  const InstrumentSeries inst = build_instruments(IndustryPanel(sim.industry), {});
  const GmmResult a = gmm_estimate(sim.records, inst, sim.trend_spec);

  auto records = sim.records;
  auto cells = sim.industry;
  for (auto& r : records) r.country = rename(r.country);
  for (auto& c : cells) c.country = rename(c.country);
  std::mt19937_64 gen(9);
  std::shuffle(records.begin(), records.end(), gen);
  std::shuffle(cells.begin(), cells.end(), gen);
  TrendSpec spec = sim.trend_spec;
  spec.countries.clear();
  for (const auto& [c, o] : sim.trend_spec.countries) spec.countries[rename(c)] = o;
  const InstrumentSeries inst2 = build_instruments(IndustryPanel(cells), {});
  const GmmResult b = gmm_estimate(records, inst2, spec);
  EXPECT_NEAR(a.theta.sigma, b.theta.sigma, 1e-6);
  EXPECT_NEAR(a.theta.rho, b.theta.rho, 1e-6);
}

TEST(GmmEstimate, DuplicatedCountriesLeaveEstimatesUnchanged) {
  SimConfig cfg;
  cfg.countries = 5;
  cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
  const SimResult sim = simulate_panel(cfg);
  const InstrumentSeries inst = build_instruments(IndustryPanel(sim.industry), {});
  const GmmResult a = gmm_estimate(sim.records, inst, sim.trend_spec, single_start(0.6, -0.3));

  auto records = sim.records;
  for (const auto& r : sim.records) {
    records.push_back(r);
    records.back().country = rename(r.country);
  }
  InstrumentSeries inst2 = inst;
  for (const auto& r : inst.rows) {
    inst2.rows.push_back(r);
    inst2.rows.back().country = rename(r.country);
  }
  TrendSpec spec = sim.trend_spec;
  for (const auto& [c, o] : sim.trend_spec.countries) spec.countries[rename(c)] = o;
  const GmmResult b = gmm_estimate(records, inst2, spec, single_start(0.6, -0.3));
  EXPECT_NEAR(a.theta.sigma, b.theta.sigma, 1e-6);
  EXPECT_NEAR(a.theta.rho, b.theta.rho, 1e-6);
  EXPECT_EQ(b.clusters, 2 * a.clusters);
}

TEST(GmmEstimate, TimeReindexingLeavesSubstitutionUnchanged) {
  SimConfig cfg;
  cfg.countries = 6;
  cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
  const SimResult sim = simulate_panel(cfg);
  const InstrumentSeries inst = build_instruments(IndustryPanel(sim.industry), {});
  const GmmResult a = gmm_estimate(sim.records, inst, sim.trend_spec, single_start(0.6, -0.3));
  auto records = sim.records;
  auto cells = sim.industry;
  for (auto& r : records) r.year += 137;
  for (auto& c : cells) c.year += 137;
  const GmmResult b = gmm_estimate(records, build_instruments(IndustryPanel(cells), {}),
                                   sim.trend_spec, single_start(0.6, -0.3));
  EXPECT_NEAR(a.theta.sigma, b.theta.sigma, 1e-6);
  EXPECT_NEAR(a.theta.rho, b.theta.rho, 1e-6);
}

TEST(GmmEstimate, OveridentifiedTwoStepWithLaggedInstruments) {
  SimConfig cfg;
  cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
  cfg.wedge_process = WedgeProcess::random_walk;
  const SimResult sim = simulate_panel(cfg);
  const InstrumentSeries inst = build_instruments(
      IndustryPanel(sim.industry), InstrumentOptions::defaults_for(InstrumentKind::lagged));
  const GmmResult r = gmm_estimate(sim.records, inst, sim.trend_spec, single_start(0.6, -0.3));
  EXPECT_TRUE(r.two_step);
  EXPECT_EQ(r.J_df, 4);
  ASSERT_TRUE(r.J_pvalue.has_value());
  EXPECT_GE(*r.J_pvalue, 0.0);
  EXPECT_LE(*r.J_pvalue, 1.0);
  EXPECT_NEAR(r.J_pvalue.value(), j_test(r.J, r.J_df).value(), 1e-12);
}

TEST(GmmEstimate, LaggedInstrumentsRecoverNoiselessTruth) {
  const SimResult& sim = noiseless().sim;
  const InstrumentSeries inst = build_instruments(
      IndustryPanel(sim.industry), InstrumentOptions::defaults_for(InstrumentKind::lagged));
  const GmmResult r = gmm_estimate(sim.records, inst, sim.trend_spec);
  EXPECT_NEAR(r.theta.sigma, sim.truth.sigma, 1e-6);
  EXPECT_NEAR(r.theta.rho, sim.truth.rho, 1e-6);
}

TEST(JTest, ClosedForms) {
  EXPECT_NEAR(j_test(7.195, 6).value(), 0.303, 1e-3);
  EXPECT_DOUBLE_EQ(j_test(0.0, 3).value(), 1.0);
  for (double x : {0.5, 2.0, 7.0}) EXPECT_NEAR(j_test(x, 2).value(), std::exp(-x / 2), 1e-14);
  EXPECT_FALSE(j_test(1.0, 0).has_value());
  EXPECT_THROW(j_test(-1.0, 2), DomainError);
}

TEST(Elasticities, TransformsAndDeltaMethod) {
  Eigen::Matrix2d cov;
  cov << 0.0004, 0.0001, 0.0001, 0.0009;
  const Elasticities cd = to_elasticities(0.0, 0.0, cov);
  EXPECT_DOUBLE_EQ(cd.k_u.value, 1.0);
  const Elasticities e = to_elasticities(1.0 - 1.0 / 6.336, 1.0 - 1.0 / 0.852, cov);
  EXPECT_NEAR(e.k_u.value, 6.336, 1e-12);
  EXPECT_NEAR(e.k_l.value, 0.852, 1e-12);
  // Finite-difference slope of the transform.
  const double s = 0.4, r = -0.7, h = 1e-6;
  const Elasticities m = to_elasticities(s, r, cov);
  const double ds = (1 / (1 - (s + h)) - 1 / (1 - (s - h))) / (2 * h);
  const double dr = (1 / (1 - (r + h)) - 1 / (1 - (r - h))) / (2 * h);
  EXPECT_NEAR(m.k_u.se, std::abs(ds) * 0.02, 1e-9);
  EXPECT_NEAR(m.k_l.se, std::abs(dr) * 0.03, 1e-9);
}

TEST(ClipSubstitution, CapsAndFloor) {
  double s = 1.2, r = 0.0;
  const double d = clip_substitution(s, r);
  EXPECT_EQ(s, kSubstitutionCap);
  EXPECT_EQ(std::abs(r), kRhoFloor);
  EXPECT_NEAR(d, std::pow(1.2 - kSubstitutionCap, 2) + kRhoFloor * kRhoFloor, 1e-15);
  double s2 = 0.5, r2 = -0.5;
  EXPECT_EQ(clip_substitution(s2, r2), 0.0);
}

TEST(ThetaFromNamed, RoundTripAndErrors) {
  const ThetaVector& truth = noiseless().sim.truth;
  std::vector<std::pair<std::string, double>> named;
  const auto names = truth.names();
  const Eigen::VectorXd x = truth.flatten();
  for (std::size_t i = 0; i < names.size(); ++i) named.emplace_back(names[i], x(static_cast<Eigen::Index>(i)));
  const ThetaVector back = theta_from_named(named, panel_origins(noiseless().sim.records));
  EXPECT_EQ(back.flatten(), x);
  auto dup = named;
  dup.push_back(named[3]);
  EXPECT_THROW(theta_from_named(dup, panel_origins(noiseless().sim.records)), ValidationError);
  auto bad = named;
  bad.emplace_back("gamma_1:C01", 1.0);
  EXPECT_THROW(theta_from_named(bad, panel_origins(noiseless().sim.records)), ValidationError);
}

TEST(TrendOrderRmse, TrueOrderFitsNoiselessPaths) {
  const auto& f = noiseless();
  const auto fits = trend_order_rmse(f.sim.records, f.sim.truth.sigma, f.sim.truth.rho, 5);
  for (const auto& fit : fits) {
    const TrendOrders o = f.sim.trend_spec.for_country(fit.country);
    if (fit.order >= std::max(o.lambda, o.mu)) EXPECT_LT(fit.rmse, 1e-8) << fit.country;
  }
  EXPECT_EQ(fits.size(), 14u * 4u);
}
