#pragma once

// GMM estimation of (sigma, rho) and country technology trends from the
// differenced skill-premium and wage-rental equations.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ces_skill/instruments.hpp"
#include "ces_skill/model.hpp"
#include "ces_skill/optimizer.hpp"
#include "ces_skill/panel.hpp"

namespace ces_skill {

inline constexpr int kMaxTrendOrder = 3;

struct TrendOrders {
  int lambda = 1;
  int mu = 1;

  friend bool operator==(const TrendOrders&, const TrendOrders&) = default;
};

// Per-country polynomial orders. Text form, one entry per line:
//   default.lambda = 1
//   C03.mu = 2
// '#' starts a comment.
struct TrendSpec {
  TrendOrders fallback;
  std::map<std::string, TrendOrders> countries;

  TrendOrders for_country(const std::string& country) const;
  void validate() const;

  static TrendSpec parse(std::istream& in, const std::string& source);
  static TrendSpec read_file(const std::filesystem::path& path);
  void write(std::ostream& out) const;
};

struct CountryTrend {
  std::string country;
  int origin_year = 0;
  double lambda0 = 0.0;        // normalization; differences out
  std::vector<double> lambda;  // orders 1..S_lambda
  std::vector<double> mu;      // orders 0..S_mu
};

// Years enter trend polynomials as tau = (year - origin_year) / 10.
double normalized_time(const CountryTrend& trend, int year);

struct ThetaVector {
  double sigma = 0.5;
  double rho = -0.5;
  std::vector<CountryTrend> trends;  // sorted by country id

  // Zero trend coefficients for every country in `origins` (country -> t0).
  static ThetaVector zeros(const TrendSpec& spec, const std::map<std::string, int>& origins,
                           double sigma, double rho);

  // Layout: sigma, rho, then per country lambda_1..lambda_S, mu_0..mu_S.
  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& x);
  std::vector<std::string> names() const;
  const CountryTrend& trend(const std::string& country) const;
  CountryTrend& trend(const std::string& country);
  // Offset of the country's block inside flatten().
  std::size_t offset(const std::string& country) const;
  void validate() const;
};

// First observed year per country, the trend origin used throughout.
std::map<std::string, int> panel_origins(const std::vector<CountryYearRecord>& panel);

// Parameter vector from (name, value) pairs in the ThetaVector::names format;
// "lambda_0:<country>" entries are accepted and set the normalization. Trend
// orders follow from the names present. Throws ValidationError on unknown,
// duplicate or missing names.
ThetaVector theta_from_named(const std::vector<std::pair<std::string, double>>& values,
                             const std::map<std::string, int>& origins);

struct ShareParams {
  double lambda = 0.5;
  double mu = 0.5;
};

ShareParams eval_share_params(const ThetaVector& theta, const std::string& country,
                              int year);

// Trend polynomial values l_t = lambda0 + sum lambda_s tau^s and
// m_t = sum mu_s tau^s.
std::pair<double, double> trend_logits(const CountryTrend& trend, int year);

// Factor-augmenting technology ratios from the trend logits (A cancels):
// ln(A_h/A_u) = l_t/sigma - ln(1 + e^m_t)/rho and ln(A_i/A_h) = m_t/rho.
double log_tech_ratio_hu(double sigma, double rho, double lt, double mt);
double log_tech_ratio_ih(double rho, double mt);

// Model-implied ln(w_h/w_u) and ln(w_h/r_i) in levels, wedges at 1.
double model_log_premium(double sigma, double rho, double lt, double mt,
                         const CountryYearRecord& r);
double model_log_wage_rental(double rho, double mt, const CountryYearRecord& r);

struct ResidualRow {
  std::string country;
  int year = 0;
  double v1 = 0.0;
  double v2 = 0.0;
};

// Differenced residuals for every (c, t) with t - horizon also observed.
std::vector<ResidualRow> residual_system(const ThetaVector& theta,
                                         const std::vector<CountryYearRecord>& panel,
                                         int horizon);

struct WedgeRow {
  std::string country;
  int year = 0;
  double log_hu = 0.0;  // ln(omega_h / omega_u)
  double log_hi = 0.0;  // ln(omega_h / omega_i)
};

std::vector<WedgeRow> wedge_residuals(const ThetaVector& theta,
                                      const std::vector<CountryYearRecord>& panel);

struct MomentSet {
  std::vector<std::string> names;
  std::vector<int> equation;           // per moment
  std::vector<std::string> country;    // per observation
  std::vector<int> year;               // per observation
  Eigen::MatrixXd z;                   // observations x moments
  Eigen::VectorXd v1;
  Eigen::VectorXd v2;
  Eigen::MatrixXd contributions;       // z_ik * v_{e_k, i}
  Eigen::VectorXd g;                   // column means of contributions

  std::size_t observations() const { return static_cast<std::size_t>(z.rows()); }
};

// Precomputed data for repeated moment evaluation. Moments per equation:
// the external instruments tagged for it, then country trend terms
// D_c tau^s, s = 0..S_lambda (premium equation, tag 1) and s = 0..S_mu - 1
// (wage-rental equation, tag 2).
class MomentProblem {
 public:
  MomentProblem(const std::vector<CountryYearRecord>& panel,
                const InstrumentSeries& instruments, const TrendSpec& spec);

  std::size_t parameters() const { return parameters_; }
  std::size_t moments() const { return moments_; }
  std::size_t observations() const { return observations_; }
  std::size_t clusters() const { return countries_.size(); }
  int horizon() const { return horizon_; }
  const std::vector<std::string>& moment_names() const { return moment_names_; }
  const std::map<std::string, int>& origins() const { return origins_; }

  ThetaVector theta(double sigma, double rho) const;
  ThetaVector theta(const Eigen::VectorXd& x) const;

  Eigen::VectorXd g(const Eigen::VectorXd& x) const;
  // dg/dx by central differences; country parameters re-evaluate only
  // their own country.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, double rel = 1e-6) const;
  // Per-country sums of the moment contributions (unscaled), one column each.
  Eigen::MatrixXd cluster_sums(const Eigen::VectorXd& x) const;
  MomentSet moment_set(const Eigen::VectorXd& x) const;

  // Solves every country's trend moments exactly for fixed (sigma, rho):
  // mu_1..mu_S from the linear equation-2 block, then mu_0 as a root of the
  // equation-1 block after eliminating lambda. Among several roots the one
  // with the smallest sum of squared v_1 wins. Writes the trend coefficients
  // into `x`; returns false when some country has no root (the scan point
  // closest to one is used).
  bool concentrate(Eigen::VectorXd& x) const;

  // Roots in mu_0 of one country's eliminated equation-1 condition on a
  // fixed scan of [-20, 20]; for diagnostics.
  std::vector<double> mu0_roots(const Eigen::VectorXd& x, std::size_t country) const;

 private:
  struct Obs {
    int year;
    double dy1, dy2;  // differenced ln(w_h/w_u), ln(w_h/r_i)
    double tau, tau_lag;
    std::array<double, kMaxTrendOrder + 2> pw, pw_lag;  // tau^0.. and lagged
    double q, q_lag;  // ln(k_i/l_h)
    double d_lh_lu, d_lh_ki;
    Eigen::VectorXd z;  // moments() entries, zero outside this country's block
  };
  struct Country {
    std::string id;
    std::size_t param_offset;
    int s_lambda, s_mu;
    std::vector<Obs> obs;
  };

  struct Block {
    Eigen::VectorXd mu_tail;    // mu_1..mu_S
    Eigen::MatrixXd A;          // equation-1 trend design (S_lambda+1) x S_lambda
    Eigen::VectorXd null;       // left null vector of A
  };
  Block block(const Country& c, double rho) const;
  Eigen::VectorXd eq1_target(const Country& c, const Block& b, double sigma, double rho,
                             double mu0) const;
  std::vector<double> roots(const Country& c, const Block& b, double sigma, double rho) const;

  void residuals(const Country& c, double sigma, double rho, const double* coef,
                 Eigen::VectorXd& v1, Eigen::VectorXd& v2) const;
  Eigen::VectorXd country_sum(const Country& c, const Eigen::VectorXd& x) const;

  std::vector<Country> countries_;
  std::vector<int> moment_equation_;
  std::vector<std::string> moment_names_;
  std::map<std::string, int> origins_;
  TrendSpec spec_;
  std::size_t parameters_ = 0;
  std::size_t moments_ = 0;
  std::size_t observations_ = 0;
  int horizon_ = 0;
};

// Clamps sigma, rho to at most 1 - 1e-4 and rho away from 0 by 1e-6.
// Returns the squared clipping distance for the objective penalty.
double clip_substitution(double& sigma, double& rho);

inline constexpr double kSubstitutionCap = 1.0 - 1e-4;
inline constexpr double kRhoFloor = 1e-6;

enum class OptimizerKind { levenberg_marquardt, bfgs };

struct GmmOptions {
  std::vector<std::pair<double, double>> starts = default_starts();
  OptimizerKind optimizer = OptimizerKind::levenberg_marquardt;
  optimize::Options optimizer_options{200, 1e-8, 1e-12, 1e-6};
  // Overrides the first-step weighting matrix (identity when empty).
  std::optional<Eigen::MatrixXd> weight;
  std::size_t threads = 0;

  // sigma in {-0.5, 0.3, 0.6, 0.9} x rho in {-1, -0.2, 0.3, 0.7}.
  static std::vector<std::pair<double, double>> default_starts();
};

struct GmmResult {
  ThetaVector theta;
  Eigen::VectorXd x;
  std::vector<std::string> names;
  Eigen::MatrixXd covariance;             // clustered by country
  Eigen::MatrixXd covariance_unclustered;
  Eigen::VectorXd g;
  double objective = 0.0;                 // g' W g
  double J = 0.0;                         // N g' W g
  int J_df = 0;
  std::optional<double> J_pvalue;
  optimize::Report report;
  std::size_t start_index = 0;
  std::size_t observations = 0;
  std::size_t clusters = 0;
  std::size_t moments = 0;
  bool two_step = false;
  bool weight_ridge = false;
  bool few_clusters = false;
  std::vector<std::string> warnings;

  double se(std::size_t i) const;
};

GmmResult gmm_estimate(const std::vector<CountryYearRecord>& panel,
                       const InstrumentSeries& instruments, const TrendSpec& spec,
                       const GmmOptions& options = {});

struct SandwichParts {
  Eigen::MatrixXd clustered;
  Eigen::MatrixXd unclustered;
};

// (1/N) B G'W S W G B with B = (G'WG)^-1. The clustered S sums contributions
// within each country and carries the C/(C-1) small-sample factor.
SandwichParts clustered_cov(const MomentProblem& problem, const Eigen::VectorXd& x,
                            const Eigen::MatrixXd& weight);

// Upper-tail chi-square probability; empty when df = 0.
std::optional<double> j_test(double J, int df);

struct Elasticity {
  double value = 0.0;
  double se = 0.0;
};

struct Elasticities {
  Elasticity k_l;  // 1/(1-rho): ICT capital vs skilled labor
  Elasticity k_u;  // 1/(1-sigma): outer nest
};

// Delta method on the 2x2 covariance of (sigma, rho).
Elasticities to_elasticities(double sigma, double rho, const Eigen::Matrix2d& cov);

struct TrendFit {
  std::string country;
  int order = 0;
  double rmse = 0.0;
};

// For fixed (sigma, rho), fits each country's trends with S_lambda = S_mu =
// order for orders 0..3 by least squares on its residuals and reports RMSE.
std::vector<TrendFit> trend_order_rmse(const std::vector<CountryYearRecord>& panel,
                                       double sigma, double rho, int horizon);

}  // namespace ces_skill
