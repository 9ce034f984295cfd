#include "ces_skill/estimation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <fmt/format.h>

#include "ces_skill/error.hpp"
#include "ces_skill/numeric.hpp"
#include "ces_skill/parallel.hpp"

namespace ces_skill {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double poly(const std::vector<double>& coef, double tau, int first_power) {
  double acc = 0.0;
  for (std::size_t i = coef.size(); i-- > 0;) acc = acc * tau + coef[i];
  return first_power == 1 ? acc * tau : acc;
}

constexpr double kMu0ScanLow = -20.0;
constexpr double kMu0ScanStep = 1.0;
constexpr int kMu0ScanSteps = 40;

void check_record(const CountryYearRecord& r) {
  if (!(r.w_h > 0.0 && r.w_u > 0.0 && r.r_i > 0.0 && r.k_i > 0.0 && r.l_h > 0.0 &&
        r.l_u > 0.0)) {
    throw DomainError(
        fmt::format("nonpositive price or quantity at ({}, {})", r.country, r.year));
  }
}

}  // namespace

TrendOrders TrendSpec::for_country(const std::string& country) const {
  const auto it = countries.find(country);
  return it == countries.end() ? fallback : it->second;
}

void TrendSpec::validate() const {
  const auto check = [](const std::string& who, const TrendOrders& o) {
    if (o.lambda < 0 || o.lambda > kMaxTrendOrder || o.mu < 0 || o.mu > kMaxTrendOrder) {
      throw ValidationError(fmt::format("trend orders for {} must lie in 0..{}, got lambda={} mu={}",
                                        who, kMaxTrendOrder, o.lambda, o.mu));
    }
  };
  check("default", fallback);
  for (const auto& [c, o] : countries) check(c, o);
}

TrendSpec TrendSpec::parse(std::istream& in, const std::string& source) {
  TrendSpec spec;
  std::map<std::string, std::pair<std::optional<int>, std::optional<int>>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    const auto dot = view.substr(0, eq).rfind('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos) {
      throw ParseError(source, lineno, 1, "expected '<country|default>.<lambda|mu> = <order>'");
    }
    const std::string who(trim(view.substr(0, dot)));
    const std::string_view what = trim(view.substr(dot + 1, eq - dot - 1));
    const std::string_view value = trim(view.substr(eq + 1));
    int order = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), order);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
      throw ParseError(source, lineno, static_cast<int>(eq) + 2,
                       fmt::format("'{}' is not an integer order", value));
    }
    if (order < 0 || order > kMaxTrendOrder) {
      throw ParseError(source, lineno, static_cast<int>(eq) + 2,
                       fmt::format("order {} outside 0..{}", order, kMaxTrendOrder));
    }
    if (who.empty()) throw ParseError(source, lineno, 1, "missing country id");
    auto& slot = entries[who];
    if (what == "lambda") {
      slot.first = order;
    } else if (what == "mu") {
      slot.second = order;
    } else {
      throw ParseError(source, lineno, static_cast<int>(dot) + 2,
                       fmt::format("unknown key '{}', expected lambda or mu", what));
    }
  }
  if (const auto it = entries.find("default"); it != entries.end()) {
    if (it->second.first) spec.fallback.lambda = *it->second.first;
    if (it->second.second) spec.fallback.mu = *it->second.second;
    entries.erase(it);
  }
  for (const auto& [c, slot] : entries) {
    spec.countries[c] = {slot.first.value_or(spec.fallback.lambda),
                         slot.second.value_or(spec.fallback.mu)};
  }
  return spec;
}

TrendSpec TrendSpec::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  return parse(in, path.filename().string());
}

void TrendSpec::write(std::ostream& out) const {
  out << "default.lambda = " << fallback.lambda << '\n';
  out << "default.mu = " << fallback.mu << '\n';
  for (const auto& [c, o] : countries) {
    out << c << ".lambda = " << o.lambda << '\n';
    out << c << ".mu = " << o.mu << '\n';
  }
}

double normalized_time(const CountryTrend& trend, int year) {
  return (year - trend.origin_year) / 10.0;
}

ThetaVector ThetaVector::zeros(const TrendSpec& spec, const std::map<std::string, int>& origins,
                               double sigma, double rho) {
  spec.validate();
  ThetaVector t;
  t.sigma = sigma;
  t.rho = rho;
  for (const auto& [c, t0] : origins) {
    const TrendOrders o = spec.for_country(c);
    CountryTrend ct;
    ct.country = c;
    ct.origin_year = t0;
    ct.lambda.assign(static_cast<std::size_t>(o.lambda), 0.0);
    ct.mu.assign(static_cast<std::size_t>(o.mu) + 1, 0.0);
    t.trends.push_back(std::move(ct));
  }
  return t;
}

std::size_t ThetaVector::size() const {
  std::size_t n = 2;
  for (const auto& t : trends) n += t.lambda.size() + t.mu.size();
  return n;
}

Eigen::VectorXd ThetaVector::flatten() const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(size()));
  Eigen::Index i = 0;
  x(i++) = sigma;
  x(i++) = rho;
  for (const auto& t : trends) {
    for (double v : t.lambda) x(i++) = v;
    for (double v : t.mu) x(i++) = v;
  }
  return x;
}

void ThetaVector::assign(const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != size()) {
    throw ValidationError(
        fmt::format("parameter vector has {} entries, expected {}", x.size(), size()));
  }
  Eigen::Index i = 0;
  sigma = x(i++);
  rho = x(i++);
  for (auto& t : trends) {
    for (double& v : t.lambda) v = x(i++);
    for (double& v : t.mu) v = x(i++);
  }
}

std::vector<std::string> ThetaVector::names() const {
  std::vector<std::string> out = {"sigma", "rho"};
  for (const auto& t : trends) {
    for (std::size_t s = 0; s < t.lambda.size(); ++s) {
      out.push_back(fmt::format("lambda_{}:{}", s + 1, t.country));
    }
    for (std::size_t s = 0; s < t.mu.size(); ++s) {
      out.push_back(fmt::format("mu_{}:{}", s, t.country));
    }
  }
  return out;
}

const CountryTrend& ThetaVector::trend(const std::string& country) const {
  const auto it = std::lower_bound(trends.begin(), trends.end(), country,
                                   [](const CountryTrend& t, const std::string& c) {
                                     return t.country < c;
                                   });
  if (it == trends.end() || it->country != country) {
    throw ValidationError(fmt::format("no trend coefficients for country {}", country));
  }
  return *it;
}

CountryTrend& ThetaVector::trend(const std::string& country) {
  return const_cast<CountryTrend&>(std::as_const(*this).trend(country));
}

std::size_t ThetaVector::offset(const std::string& country) const {
  std::size_t off = 2;
  for (const auto& t : trends) {
    if (t.country == country) return off;
    off += t.lambda.size() + t.mu.size();
  }
  throw ValidationError(fmt::format("no trend coefficients for country {}", country));
}

void ThetaVector::validate() const {
  if (!(sigma < 1.0) || !(rho < 1.0)) {
    throw DomainError(fmt::format("need sigma < 1 and rho < 1, got {} and {}", sigma, rho));
  }
  if (!flatten().allFinite()) throw DomainError("parameter vector has non-finite entries");
  for (std::size_t i = 1; i < trends.size(); ++i) {
    if (!(trends[i - 1].country < trends[i].country)) {
      throw ValidationError("trend blocks must be sorted by unique country id");
    }
  }
  for (const auto& t : trends) {
    if (t.lambda.size() > kMaxTrendOrder || t.mu.empty() || t.mu.size() > kMaxTrendOrder + 1) {
      throw ValidationError(fmt::format("trend orders for {} outside 0..{}", t.country,
                                        kMaxTrendOrder));
    }
  }
}

std::map<std::string, int> panel_origins(const std::vector<CountryYearRecord>& panel) {
  std::map<std::string, int> out;
  for (const auto& r : panel) {
    auto [it, fresh] = out.emplace(r.country, r.year);
    if (!fresh) it->second = std::min(it->second, r.year);
  }
  return out;
}

ThetaVector theta_from_named(const std::vector<std::pair<std::string, double>>& values,
                             const std::map<std::string, int>& origins) {
  struct Slots {
    std::map<int, double> lambda, mu;
    std::optional<double> lambda0;
  };
  std::optional<double> sigma, rho;
  std::map<std::string, Slots> slots;
  const auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  for (const auto& [name, v] : values) {
    if (name == "sigma" || name == "rho") {
      auto& dst = name == "sigma" ? sigma : rho;
      if (dst) fail("duplicate parameter " + name);
      dst = v;
      continue;
    }
    const auto colon = name.find(':');
    const auto under = name.find('_');
    if (colon == std::string::npos || under == std::string::npos || under > colon) {
      fail("unrecognized parameter name " + name);
    }
    const std::string kind = name.substr(0, under);
    const std::string order_text = name.substr(under + 1, colon - under - 1);
    const std::string country = name.substr(colon + 1);
    int order = -1;
    const auto [ptr, ec] =
        std::from_chars(order_text.data(), order_text.data() + order_text.size(), order);
    if (ec != std::errc{} || ptr != order_text.data() + order_text.size() || order < 0 ||
        order > kMaxTrendOrder || (kind != "lambda" && kind != "mu")) {
      fail("unrecognized parameter name " + name);
    }
    if (!origins.count(country)) fail("parameter " + name + " names a country not in the panel");
    Slots& s = slots[country];
    if (kind == "lambda" && order == 0) {
      if (s.lambda0) fail("duplicate parameter " + name);
      s.lambda0 = v;
      continue;
    }
    auto& m = kind == "lambda" ? s.lambda : s.mu;
    if (!m.emplace(order, v).second) fail("duplicate parameter " + name);
  }
  if (!sigma || !rho) fail("parameters sigma and rho are required");
  ThetaVector t;
  t.sigma = *sigma;
  t.rho = *rho;
  for (const auto& [country, t0] : origins) {
    const auto it = slots.find(country);
    if (it == slots.end()) fail("no trend coefficients for country " + country);
    const Slots& s = it->second;
    CountryTrend ct;
    ct.country = country;
    ct.origin_year = t0;
    ct.lambda0 = s.lambda0.value_or(0.0);
    for (int k = 1; k <= static_cast<int>(s.lambda.size()); ++k) {
      const auto f = s.lambda.find(k);
      if (f == s.lambda.end()) fail(fmt::format("missing lambda_{}:{}", k, country));
      ct.lambda.push_back(f->second);
    }
    for (int k = 0; k < static_cast<int>(s.mu.size()); ++k) {
      const auto f = s.mu.find(k);
      if (f == s.mu.end()) fail(fmt::format("missing mu_{}:{}", k, country));
      ct.mu.push_back(f->second);
    }
    if (ct.mu.empty()) fail("missing mu_0:" + country);
    t.trends.push_back(std::move(ct));
  }
  t.validate();
  return t;
}

std::pair<double, double> trend_logits(const CountryTrend& trend, int year) {
  const double tau = normalized_time(trend, year);
  return {trend.lambda0 + poly(trend.lambda, tau, 1), poly(trend.mu, tau, 0)};
}

ShareParams eval_share_params(const ThetaVector& theta, const std::string& country,
                              int year) {
  const auto [lt, mt] = trend_logits(theta.trend(country), year);
  return {numeric::logistic(lt), numeric::logistic(mt)};
}

double log_tech_ratio_hu(double sigma, double rho, double lt, double mt) {
  return lt / sigma - numeric::log1p_exp(mt) / rho;
}

double log_tech_ratio_ih(double rho, double mt) { return mt / rho; }

double model_log_premium(double sigma, double rho, double lt, double mt,
                         const CountryYearRecord& r) {
  const double q = std::log(r.k_i) - std::log(r.l_h);
  return lt - (sigma / rho) * numeric::log1p_exp(mt) +
         ((sigma - rho) / rho) * numeric::log1p_exp(mt + rho * q) -
         (1.0 - sigma) * (std::log(r.l_h) - std::log(r.l_u));
}

double model_log_wage_rental(double rho, double mt, const CountryYearRecord& r) {
  return -mt - (1.0 - rho) * (std::log(r.l_h) - std::log(r.k_i));
}

std::vector<WedgeRow> wedge_residuals(const ThetaVector& theta,
                                      const std::vector<CountryYearRecord>& panel) {
  if (theta.rho == 0.0) throw DomainError("rho must be nonzero");
  std::vector<WedgeRow> out;
  out.reserve(panel.size());
  for (const auto& r : panel) {
    check_record(r);
    const auto [lt, mt] = trend_logits(theta.trend(r.country), r.year);
    out.push_back({r.country, r.year,
                   std::log(r.w_h) - std::log(r.w_u) -
                       model_log_premium(theta.sigma, theta.rho, lt, mt, r),
                   std::log(r.w_h) - std::log(r.r_i) - model_log_wage_rental(theta.rho, mt, r)});
  }
  std::sort(out.begin(), out.end(), [](const WedgeRow& a, const WedgeRow& b) {
    return std::tie(a.country, a.year) < std::tie(b.country, b.year);
  });
  return out;
}

std::vector<ResidualRow> residual_system(const ThetaVector& theta,
                                         const std::vector<CountryYearRecord>& panel,
                                         int horizon) {
  if (horizon < 1) throw ValidationError(fmt::format("horizon must be >= 1, got {}", horizon));
  const auto wedges = wedge_residuals(theta, panel);
  std::map<std::pair<std::string, int>, const WedgeRow*> index;
  for (const auto& w : wedges) index[{w.country, w.year}] = &w;
  std::vector<ResidualRow> out;
  for (const auto& w : wedges) {
    const auto it = index.find({w.country, w.year - horizon});
    if (it == index.end()) continue;
    out.push_back({w.country, w.year, w.log_hu - it->second->log_hu,
                   w.log_hi - it->second->log_hi});
  }
  if (out.empty() && !panel.empty()) {
    throw ValidationError(
        fmt::format("no country has two observations {} years apart", horizon));
  }
  return out;
}

double clip_substitution(double& sigma, double& rho) {
  double dist = 0.0;
  if (sigma > kSubstitutionCap) {
    dist += (sigma - kSubstitutionCap) * (sigma - kSubstitutionCap);
    sigma = kSubstitutionCap;
  }
  if (rho > kSubstitutionCap) {
    dist += (rho - kSubstitutionCap) * (rho - kSubstitutionCap);
    rho = kSubstitutionCap;
  }
  if (std::abs(rho) < kRhoFloor) {
    const double target = std::signbit(rho) ? -kRhoFloor : kRhoFloor;
    dist += (rho - target) * (rho - target);
    rho = target;
  }
  return dist;
}

MomentProblem::MomentProblem(const std::vector<CountryYearRecord>& panel,
                             const InstrumentSeries& instruments, const TrendSpec& spec)
    : spec_(spec), horizon_(instruments.horizon) {
  spec.validate();
  if (horizon_ < 1) throw ValidationError("instrument horizon must be >= 1");
  if (instruments.names.size() != instruments.equation.size()) {
    throw ValidationError("instrument names and equation tags differ in length");
  }
  const auto grouped = by_country(panel);
  for (const auto& [c, rows] : grouped) origins_[c] = rows.front().year;

  for (std::size_t k = 0; k < instruments.names.size(); ++k) {
    const int e = instruments.equation[k];
    if (e != 1 && e != 2) throw ValidationError("instrument equation tag must be 1 or 2");
    moment_names_.push_back(fmt::format("eq{}:{}", e, instruments.names[k]));
    moment_equation_.push_back(e);
  }
  const std::size_t externals = moment_names_.size();
  std::map<std::string, std::size_t> block_start;
  for (const auto& [c, t0] : origins_) {
    const TrendOrders o = spec.for_country(c);
    block_start[c] = moment_names_.size();
    for (int s = 0; s <= o.lambda; ++s) {
      moment_names_.push_back(fmt::format("eq1:tau{}:{}", s, c));
      moment_equation_.push_back(1);
    }
    for (int s = 0; s < o.mu; ++s) {
      moment_names_.push_back(fmt::format("eq2:tau{}:{}", s, c));
      moment_equation_.push_back(2);
    }
  }
  moments_ = moment_names_.size();

  std::map<std::string, std::vector<const InstrumentRow*>> inst_rows;
  for (const auto& row : instruments.rows) {
    if (row.values.size() != externals) {
      throw ValidationError(fmt::format("instrument row ({}, {}) has {} values, expected {}",
                                        row.country, row.year, row.values.size(), externals));
    }
    if (!grouped.contains(row.country)) {
      throw ValidationError(
          fmt::format("instrument row ({}, {}) has no panel country", row.country, row.year));
    }
    inst_rows[row.country].push_back(&row);
  }

  parameters_ = 2;
  for (const auto& [c, rows] : grouped) {
    const TrendOrders o = spec.for_country(c);
    Country cc{c, parameters_, o.lambda, o.mu, {}};
    parameters_ += static_cast<std::size_t>(o.lambda + o.mu + 1);
    std::map<int, const CountryYearRecord*> by_year;
    for (const auto& r : rows) {
      check_record(r);
      by_year[r.year] = &r;
    }
    const auto it = inst_rows.find(c);
    if (it == inst_rows.end()) {
      throw ValidationError(fmt::format("country {} has no instrument rows", c));
    }
    const int t0 = origins_.at(c);
    for (const InstrumentRow* row : it->second) {
      const auto now = by_year.find(row->year);
      const auto lag = by_year.find(row->year - horizon_);
      if (now == by_year.end() || lag == by_year.end()) {
        throw ValidationError(fmt::format(
            "instrument row ({}, {}) does not align with panel years {} and {}", c, row->year,
            row->year - horizon_, row->year));
      }
      const CountryYearRecord& a = *now->second;
      const CountryYearRecord& b = *lag->second;
      Obs obs;
      obs.year = row->year;
      obs.dy1 = (std::log(a.w_h) - std::log(a.w_u)) - (std::log(b.w_h) - std::log(b.w_u));
      obs.dy2 = (std::log(a.w_h) - std::log(a.r_i)) - (std::log(b.w_h) - std::log(b.r_i));
      obs.tau = (a.year - t0) / 10.0;
      obs.tau_lag = (b.year - t0) / 10.0;
      for (std::size_t s = 0; s < obs.pw.size(); ++s) {
        obs.pw[s] = std::pow(obs.tau, static_cast<double>(s));
        obs.pw_lag[s] = std::pow(obs.tau_lag, static_cast<double>(s));
      }
      obs.q = std::log(a.k_i) - std::log(a.l_h);
      obs.q_lag = std::log(b.k_i) - std::log(b.l_h);
      obs.d_lh_lu = (std::log(a.l_h) - std::log(a.l_u)) - (std::log(b.l_h) - std::log(b.l_u));
      obs.d_lh_ki = -(obs.q - obs.q_lag);
      obs.z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(moments_));
      for (std::size_t k = 0; k < externals; ++k) {
        obs.z(static_cast<Eigen::Index>(k)) = row->values[k];
      }
      std::size_t m = block_start.at(c);
      for (int s = 0; s <= o.lambda; ++s) obs.z(static_cast<Eigen::Index>(m++)) = std::pow(obs.tau, s);
      for (int s = 0; s < o.mu; ++s) obs.z(static_cast<Eigen::Index>(m++)) = std::pow(obs.tau, s);
      cc.obs.push_back(std::move(obs));
    }
    std::sort(cc.obs.begin(), cc.obs.end(),
              [](const Obs& x, const Obs& y) { return x.year < y.year; });
    observations_ += cc.obs.size();
    countries_.push_back(std::move(cc));
  }

  if (moments_ < parameters_) {
    throw ValidationError(fmt::format("{} moments cannot identify {} parameters", moments_,
                                      parameters_));
  }
  if (observations_ < parameters_ + countries_.size()) {
    throw ValidationError(fmt::format("{} observations, need at least {} parameters + {} clusters",
                                      observations_, parameters_, countries_.size()));
  }
}

ThetaVector MomentProblem::theta(double sigma, double rho) const {
  return ThetaVector::zeros(spec_, origins_, sigma, rho);
}

ThetaVector MomentProblem::theta(const Eigen::VectorXd& x) const {
  ThetaVector t = theta(0.5, -0.5);
  t.assign(x);
  return t;
}

void MomentProblem::residuals(const Country& c, double sigma, double rho, const double* coef,
                              Eigen::VectorXd& v1, Eigen::VectorXd& v2) const {
  const double* lambda = coef;
  const double* mu = coef + c.s_lambda;
  const auto n = static_cast<Eigen::Index>(c.obs.size());
  v1.resize(n);
  v2.resize(n);
  const double a = sigma / rho;
  const double b = (sigma - rho) / rho;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Obs& o = c.obs[static_cast<std::size_t>(i)];
    double dl = 0.0;
    for (int s = 0; s < c.s_lambda; ++s) dl += lambda[s] * (o.pw[s + 1] - o.pw_lag[s + 1]);
    double m1 = 0.0, m0 = 0.0;
    for (int s = 0; s <= c.s_mu; ++s) {
      m1 += mu[s] * o.pw[s];
      m0 += mu[s] * o.pw_lag[s];
    }
    const double fit1 = dl - a * (numeric::log1p_exp(m1) - numeric::log1p_exp(m0)) +
                        b * (numeric::log1p_exp(m1 + rho * o.q) -
                             numeric::log1p_exp(m0 + rho * o.q_lag)) -
                        (1.0 - sigma) * o.d_lh_lu;
    const double fit2 = -(m1 - m0) - (1.0 - rho) * o.d_lh_ki;
    v1(i) = o.dy1 - fit1;
    v2(i) = o.dy2 - fit2;
  }
}

Eigen::VectorXd MomentProblem::country_sum(const Country& c, const Eigen::VectorXd& x) const {
  double sigma = x(0), rho = x(1);
  clip_substitution(sigma, rho);
  Eigen::VectorXd v1, v2;
  residuals(c, sigma, rho, x.data() + c.param_offset, v1, v2);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(moments_));
  for (std::size_t i = 0; i < c.obs.size(); ++i) {
    const Eigen::VectorXd& z = c.obs[i].z;
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < moments_; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double zk = z(kk);
      if (zk != 0.0) sum(kk) += zk * (moment_equation_[k] == 1 ? v1(ii) : v2(ii));
    }
  }
  return sum;
}

Eigen::VectorXd MomentProblem::g(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != parameters_) {
    throw ValidationError("parameter vector length does not match the moment problem");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(moments_));
  for (const auto& c : countries_) sum += country_sum(c, x);
  return sum / static_cast<double>(observations_);
}

Eigen::MatrixXd MomentProblem::cluster_sums(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(moments_),
                      static_cast<Eigen::Index>(countries_.size()));
  for (std::size_t c = 0; c < countries_.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = country_sum(countries_[c], x);
  }
  return out;
}

Eigen::MatrixXd MomentProblem::jacobian(const Eigen::VectorXd& x, double rel) const {
  const auto P = static_cast<Eigen::Index>(moments_);
  Eigen::MatrixXd G(P, static_cast<Eigen::Index>(parameters_));
  const double n = static_cast<double>(observations_);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double h = rel * std::max(std::abs(x(j)), 1.0);
    xp(j) = x(j) + h;
    const Eigen::VectorXd gp = g(xp);
    xp(j) = x(j) - h;
    const Eigen::VectorXd gm = g(xp);
    xp(j) = x(j);
    G.col(j) = (gp - gm) / (2.0 * h);
  }
  for (const auto& c : countries_) {
    const auto first = static_cast<Eigen::Index>(c.param_offset);
    const auto last = first + c.s_lambda + c.s_mu + 1;
    for (Eigen::Index j = first; j < last; ++j) {
      const double h = rel * std::max(std::abs(x(j)), 1.0);
      xp(j) = x(j) + h;
      const Eigen::VectorXd sp = country_sum(c, xp);
      xp(j) = x(j) - h;
      const Eigen::VectorXd sm = country_sum(c, xp);
      xp(j) = x(j);
      G.col(j) = (sp - sm) / (2.0 * h * n);
    }
  }
  return G;
}

MomentSet MomentProblem::moment_set(const Eigen::VectorXd& x) const {
  double sigma = x(0), rho = x(1);
  clip_substitution(sigma, rho);
  MomentSet ms;
  ms.names = moment_names_;
  ms.equation = moment_equation_;
  const auto N = static_cast<Eigen::Index>(observations_);
  const auto P = static_cast<Eigen::Index>(moments_);
  ms.z.resize(N, P);
  ms.v1.resize(N);
  ms.v2.resize(N);
  ms.contributions.resize(N, P);
  Eigen::Index row = 0;
  for (const auto& c : countries_) {
    Eigen::VectorXd v1, v2;
    residuals(c, sigma, rho, x.data() + c.param_offset, v1, v2);
    for (std::size_t i = 0; i < c.obs.size(); ++i, ++row) {
      const auto ii = static_cast<Eigen::Index>(i);
      ms.country.push_back(c.id);
      ms.year.push_back(c.obs[i].year);
      ms.z.row(row) = c.obs[i].z.transpose();
      ms.v1(row) = v1(ii);
      ms.v2(row) = v2(ii);
      for (Eigen::Index k = 0; k < P; ++k) {
        ms.contributions(row, k) =
            ms.z(row, k) * (moment_equation_[static_cast<std::size_t>(k)] == 1 ? v1(ii) : v2(ii));
      }
    }
  }
  ms.g = ms.contributions.colwise().mean().transpose();
  return ms;
}

std::vector<std::pair<double, double>> GmmOptions::default_starts() {
  std::vector<std::pair<double, double>> out;
  for (double s : {-0.5, 0.3, 0.6, 0.9}) {
    for (double r : {-1.0, -0.2, 0.3, 0.7}) out.emplace_back(s, r);
  }
  return out;
}

double GmmResult::se(std::size_t i) const {
  const auto ii = static_cast<Eigen::Index>(i);
  return std::sqrt(std::max(covariance(ii, ii), 0.0));
}

namespace {

constexpr double kPenaltyScale = 1e2;

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  return m.completeOrthogonalDecomposition().pseudoInverse();
}

optimize::Result minimize(const MomentProblem& problem, const Eigen::MatrixXd& weight,
                          const Eigen::VectorXd& x0, const GmmOptions& options) {
  const Eigen::LLT<Eigen::MatrixXd> llt(weight);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("weighting matrix is not positive definite");
  }
  const Eigen::MatrixXd Lt = llt.matrixL().transpose();
  const auto P = static_cast<Eigen::Index>(problem.moments());
  const auto penalty = [](const Eigen::VectorXd& x) {
    double s = x(0), r = x(1);
    return clip_substitution(s, r);
  };
  if (options.optimizer == OptimizerKind::bfgs) {
    const optimize::ObjectiveFn f = [&](const Eigen::VectorXd& x) {
      const Eigen::VectorXd e = Lt * problem.g(x);
      return e.squaredNorm() + kPenaltyScale * kPenaltyScale * penalty(x);
    };
    return optimize::bfgs(f, x0, options.optimizer_options);
  }
  const optimize::ResidualFn r = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd e(P + 1);
    e.head(P) = Lt * problem.g(x);
    e(P) = kPenaltyScale * std::sqrt(penalty(x));
    return e;
  };
  const optimize::JacobianFn jac = [&](const Eigen::VectorXd& x) {
    const double rel = options.optimizer_options.fd_relative_step;
    Eigen::MatrixXd J(P + 1, x.size());
    J.topRows(P) = Lt * problem.jacobian(x, rel);
    J.row(P).setZero();
    if (penalty(x) > 0.0) {
      Eigen::VectorXd xp = x;
      for (Eigen::Index j = 0; j < 2; ++j) {
        const double h = rel * std::max(std::abs(x(j)), 1.0);
        xp(j) = x(j) + h;
        const double up = std::sqrt(penalty(xp));
        xp(j) = x(j) - h;
        const double dn = std::sqrt(penalty(xp));
        xp(j) = x(j);
        J(P, j) = kPenaltyScale * (up - dn) / (2.0 * h);
      }
    }
    return J;
  };
  return optimize::levenberg_marquardt(r, jac, x0, options.optimizer_options);
}

// Search over (sigma, rho) with every country's trends solved exactly, then
// polish all parameters jointly from the best concentrated point.
optimize::Result minimize_concentrated(const MomentProblem& problem,
                                       const Eigen::MatrixXd& weight, double sigma0,
                                       double rho0, const GmmOptions& options) {
  const Eigen::LLT<Eigen::MatrixXd> llt(weight);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("weighting matrix is not positive definite");
  }
  const Eigen::MatrixXd Lt = llt.matrixL().transpose();
  const auto P = static_cast<Eigen::Index>(problem.moments());
  const Eigen::VectorXd zero = problem.theta(sigma0, rho0).flatten();
  const auto expand = [&](const Eigen::VectorXd& sr) {
    Eigen::VectorXd x = zero;
    x(0) = sr(0);
    x(1) = sr(1);
    problem.concentrate(x);
    return x;
  };
  const optimize::ResidualFn r = [&](const Eigen::VectorXd& sr) {
    double s = sr(0), q = sr(1);
    const double pen = clip_substitution(s, q);
    Eigen::VectorXd e(P + 1);
    e.head(P) = Lt * problem.g(expand(sr));
    e(P) = kPenaltyScale * std::sqrt(pen);
    return e;
  };
  Eigen::Vector2d start(sigma0, rho0);
  optimize::Options outer_opts = options.optimizer_options;
  const optimize::Result outer = optimize::levenberg_marquardt(r, {}, start, outer_opts);
  optimize::Result polished = minimize(problem, weight, expand(outer.x), options);
  optimize::Result out = polished;
  out.report.history = outer.report.history;
  out.report.history.insert(out.report.history.end(), polished.report.history.begin() + 1,
                            polished.report.history.end());
  out.report.iterations += outer.report.iterations;
  out.report.evaluations += outer.report.evaluations;
  return out;
}

}  // namespace

SandwichParts clustered_cov(const MomentProblem& problem, const Eigen::VectorXd& x,
                            const Eigen::MatrixXd& weight) {
  const double n = static_cast<double>(problem.observations());
  const double c = static_cast<double>(problem.clusters());
  const Eigen::MatrixXd G = problem.jacobian(x);
  const Eigen::MatrixXd sums = problem.cluster_sums(x);
  Eigen::MatrixXd S_c = sums * sums.transpose() / n;
  if (c > 1.0) S_c *= c / (c - 1.0);
  const MomentSet ms = problem.moment_set(x);
  const Eigen::MatrixXd S_u = ms.contributions.transpose() * ms.contributions / n;
  const Eigen::MatrixXd WG = weight * G;
  const Eigen::MatrixXd bread = pseudo_inverse(G.transpose() * WG);
  const auto sandwich = [&](const Eigen::MatrixXd& S) {
    Eigen::MatrixXd V = bread * (WG.transpose() * S * WG) * bread / n;
    return Eigen::MatrixXd(0.5 * (V + V.transpose()));
  };
  return {sandwich(S_c), sandwich(S_u)};
}

GmmResult gmm_estimate(const std::vector<CountryYearRecord>& panel,
                       const InstrumentSeries& instruments, const TrendSpec& spec,
                       const GmmOptions& options) {
  const MomentProblem problem(panel, instruments, spec);
  const auto P = static_cast<Eigen::Index>(problem.moments());
  const auto K = static_cast<Eigen::Index>(problem.parameters());
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(P, P);
  if (options.weight) {
    if (options.weight->rows() != P || options.weight->cols() != P) {
      throw ValidationError(fmt::format("weighting matrix must be {}x{}", P, P));
    }
    W = *options.weight;
  }
  if (options.starts.empty()) throw ValidationError("at least one starting point is required");

  std::vector<optimize::Result> runs(options.starts.size());
  parallel::for_each_index(
      options.starts.size(),
      [&](std::size_t i) {
        runs[i] = minimize_concentrated(problem, W, options.starts[i].first,
                                        options.starts[i].second, options);
      },
      options.threads);
  std::size_t best = runs.size();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const double f = runs[i].report.objective;
    if (!std::isfinite(f)) continue;
    if (best == runs.size() || f < runs[best].report.objective) best = i;
  }
  if (best == runs.size()) {
    throw NumericalError("GMM objective is not finite from any starting point");
  }

  GmmResult out;
  out.start_index = best;
  optimize::Result run = runs[best];
  if (P > K) {
    out.two_step = true;
    const MomentSet ms = problem.moment_set(run.x);
    Eigen::MatrixXd S = ms.contributions.transpose() * ms.contributions /
                        static_cast<double>(problem.observations());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const double scale = std::max(S.diagonal().mean(), std::numeric_limits<double>::min());
    if (eig.eigenvalues().minCoeff() <= 1e-12 * scale) {
      S.diagonal().array() += 1e-10 * scale;
      out.weight_ridge = true;
      out.warnings.push_back("moment covariance is singular; ridge 1e-10 applied");
    }
    W = S.ldlt().solve(Eigen::MatrixXd::Identity(P, P));
    W = 0.5 * (W + W.transpose());
    run = minimize(problem, W, run.x, options);
  }

  out.x = run.x;
  out.report = run.report;
  out.theta = problem.theta(run.x);
  clip_substitution(out.theta.sigma, out.theta.rho);
  out.x(0) = out.theta.sigma;
  out.x(1) = out.theta.rho;
  out.names = out.theta.names();
  out.g = problem.g(out.x);
  out.objective = out.g.dot(W * out.g);
  out.observations = problem.observations();
  out.clusters = problem.clusters();
  out.moments = problem.moments();
  out.J = static_cast<double>(out.observations) * out.objective;
  out.J_df = static_cast<int>(P - K);
  out.J_pvalue = j_test(std::max(out.J, 0.0), out.J_df);
  const SandwichParts cov = clustered_cov(problem, out.x, W);
  out.covariance = cov.clustered;
  out.covariance_unclustered = cov.unclustered;
  if (out.clusters < static_cast<std::size_t>(K)) {
    out.few_clusters = true;
    out.warnings.push_back(fmt::format("{} clusters for {} parameters: clustered covariance is rank deficient",
                                       out.clusters, K));
  }
  if (!out.report.converged) {
    out.warnings.push_back("optimizer did not converge: " + out.report.message);
  }
  return out;
}

std::optional<double> j_test(double J, int df) {
  if (df < 0) throw DomainError(fmt::format("J-test degrees of freedom must be >= 0, got {}", df));
  if (!(J >= 0.0)) throw DomainError(fmt::format("J statistic must be >= 0, got {}", J));
  if (df == 0) return std::nullopt;
  if (std::isinf(J)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * J);
}

Elasticities to_elasticities(double sigma, double rho, const Eigen::Matrix2d& cov) {
  if (!(sigma < 1.0) || !(rho < 1.0)) {
    throw DomainError(fmt::format("need sigma < 1 and rho < 1, got {} and {}", sigma, rho));
  }
  Elasticities e;
  e.k_u.value = 1.0 / (1.0 - sigma);
  e.k_l.value = 1.0 / (1.0 - rho);
  e.k_u.se = e.k_u.value * e.k_u.value * std::sqrt(std::max(cov(0, 0), 0.0));
  e.k_l.se = e.k_l.value * e.k_l.value * std::sqrt(std::max(cov(1, 1), 0.0));
  return e;
}

std::vector<TrendFit> trend_order_rmse(const std::vector<CountryYearRecord>& panel,
                                       double sigma, double rho, int horizon) {
  if (rho == 0.0) throw DomainError("rho must be nonzero");
  std::vector<TrendFit> out;
  for (const auto& [country, rows] : by_country(panel)) {
    for (int order = 0; order <= kMaxTrendOrder; ++order) {
      ThetaVector theta;
      theta.sigma = sigma;
      theta.rho = rho;
      theta.trends.push_back({country, rows.front().year, 0.0,
                              std::vector<double>(static_cast<std::size_t>(order), 0.0),
                              std::vector<double>(static_cast<std::size_t>(order) + 1, 0.0)});
      const auto residuals = [&](const Eigen::VectorXd& coef) {
        ThetaVector t = theta;
        Eigen::VectorXd x(coef.size() + 2);
        x << sigma, rho, coef;
        t.assign(x);
        const auto res = residual_system(t, rows, horizon);
        Eigen::VectorXd e(static_cast<Eigen::Index>(2 * res.size()));
        for (std::size_t i = 0; i < res.size(); ++i) {
          e(static_cast<Eigen::Index>(2 * i)) = res[i].v1;
          e(static_cast<Eigen::Index>(2 * i + 1)) = res[i].v2;
        }
        return e;
      };
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * order + 1);
      const std::size_t n = static_cast<std::size_t>(residuals(zero).size());
      TrendFit fit{country, order, std::numeric_limits<double>::quiet_NaN()};
      if (n >= static_cast<std::size_t>(2 * order + 1)) {
        const auto res = optimize::levenberg_marquardt(residuals, {}, zero);
        fit.rmse = std::sqrt(res.report.objective / static_cast<double>(n));
      }
      out.push_back(fit);
    }
  }
  return out;
}

}  // namespace ces_skill

namespace ces_skill {

MomentProblem::Block MomentProblem::block(const Country& c, double rho) const {
  Block b;
  const int sm = c.s_mu;
  b.mu_tail = Eigen::VectorXd::Zero(sm);
  if (sm > 0) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(sm, sm);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sm);
    for (const Obs& o : c.obs) {
      const double a = o.dy2 + (1.0 - rho) * o.d_lh_ki;
      for (int s = 0; s < sm; ++s) {
        rhs(s) -= o.pw[s] * a;
        for (int k = 1; k <= sm; ++k) M(s, k - 1) += o.pw[s] * (o.pw[k] - o.pw_lag[k]);
      }
    }
    b.mu_tail = M.fullPivLu().solve(rhs);
  }
  const int sl = c.s_lambda;
  b.A = Eigen::MatrixXd::Zero(sl + 1, sl);
  for (const Obs& o : c.obs) {
    for (int s = 0; s <= sl; ++s) {
      for (int k = 1; k <= sl; ++k) {
        b.A(s, k - 1) += o.pw[s] * (o.pw[k] - o.pw_lag[k]);
      }
    }
  }
  if (sl == 0) {
    b.null = Eigen::VectorXd::Ones(1);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.A, Eigen::ComputeFullU);
    b.null = svd.matrixU().col(sl);
  }
  return b;
}

Eigen::VectorXd MomentProblem::eq1_target(const Country& c, const Block& b, double sigma,
                                         double rho, double mu0) const {
  const int sl = c.s_lambda;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sl + 1);
  const double a = sigma / rho;
  const double k = (sigma - rho) / rho;
  for (const Obs& o : c.obs) {
    double m1 = mu0, m0 = mu0;
    for (Eigen::Index s = 0; s < b.mu_tail.size(); ++s) {
      m1 += b.mu_tail(s) * o.pw[static_cast<std::size_t>(s) + 1];
      m0 += b.mu_tail(s) * o.pw_lag[static_cast<std::size_t>(s) + 1];
    }
    const double cval = o.dy1 + a * (numeric::log1p_exp(m1) - numeric::log1p_exp(m0)) -
                        k * (numeric::log1p_exp(m1 + rho * o.q) -
                             numeric::log1p_exp(m0 + rho * o.q_lag)) +
                        (1.0 - sigma) * o.d_lh_lu;
    for (int s = 0; s <= sl; ++s) rhs(s) += o.pw[static_cast<std::size_t>(s)] * cval;
  }
  return rhs;
}

std::vector<double> MomentProblem::roots(const Country& c, const Block& b, double sigma,
                                         double rho) const {
  const auto f = [&](double mu0) { return b.null.dot(eq1_target(c, b, sigma, rho, mu0)); };
  std::vector<double> out;
  double x0 = kMu0ScanLow, f0 = f(x0);
  for (int i = 1; i <= kMu0ScanSteps; ++i) {
    const double x1 = kMu0ScanLow + kMu0ScanStep * i;
    const double f1 = f(x1);
    if (f0 == 0.0) {
      out.push_back(x0);
    } else if (f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
      std::uintmax_t iters = 100;
      const auto [a, bb] = boost::math::tools::toms748_solve(
          f, x0, x1, f0, f1, boost::math::tools::eps_tolerance<double>(52), iters);
      out.push_back(0.5 * (a + bb));
    }
    x0 = x1;
    f0 = f1;
  }
  if (f0 == 0.0) out.push_back(x0);
  return out;
}

std::vector<double> MomentProblem::mu0_roots(const Eigen::VectorXd& x, std::size_t country) const {
  double sigma = x(0), rho = x(1);
  clip_substitution(sigma, rho);
  const Country& c = countries_.at(country);
  return roots(c, block(c, rho), sigma, rho);
}

bool MomentProblem::concentrate(Eigen::VectorXd& x) const {
  double sigma = x(0), rho = x(1);
  clip_substitution(sigma, rho);
  bool all = true;
  for (const Country& c : countries_) {
    const Block b = block(c, rho);
    const auto off = static_cast<Eigen::Index>(c.param_offset);
    const Eigen::Index width = c.s_lambda + c.s_mu + 1;
    const auto fill = [&](double mu0, Eigen::VectorXd& coef) {
      coef.resize(width);
      const Eigen::VectorXd rhs = eq1_target(c, b, sigma, rho, mu0);
      if (c.s_lambda > 0) coef.head(c.s_lambda) = b.A.colPivHouseholderQr().solve(rhs);
      coef(c.s_lambda) = mu0;
      coef.tail(c.s_mu) = b.mu_tail;
    };
    std::vector<double> candidates = roots(c, b, sigma, rho);
    if (candidates.empty()) {
      all = false;
      double best = std::numeric_limits<double>::infinity();
      double arg = 0.0;
      for (int i = 0; i <= kMu0ScanSteps; ++i) {
        const double m = kMu0ScanLow + kMu0ScanStep * i;
        const double v = std::abs(b.null.dot(eq1_target(c, b, sigma, rho, m)));
        if (v < best) {
          best = v;
          arg = m;
        }
      }
      candidates.push_back(arg);
    }
    double best_ssr = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_coef;
    for (double mu0 : candidates) {
      Eigen::VectorXd coef;
      fill(mu0, coef);
      Eigen::VectorXd v1, v2;
      residuals(c, sigma, rho, coef.data(), v1, v2);
      const double ssr = v1.squaredNorm();
      if (ssr < best_ssr) {
        best_ssr = ssr;
        best_coef = coef;
      }
    }
    x.segment(off, width) = best_coef;
  }
  return all;
}

}  // namespace ces_skill
