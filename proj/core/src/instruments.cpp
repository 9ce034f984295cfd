#include "ces_skill/instruments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "ces_skill/error.hpp"

namespace ces_skill {

std::string_view to_string(Quantity q) {
  switch (q) {
    case Quantity::k_i: return "k_i";
    case Quantity::l_h: return "l_h";
    case Quantity::l_u: return "l_u";
  }
  return "?";
}

double IndustryCell::get(Quantity q) const {
  switch (q) {
    case Quantity::k_i: return k_i;
    case Quantity::l_h: return l_h;
    case Quantity::l_u: return l_u;
  }
  return 0.0;
}

IndustryCellSeries parse_industry(const csv::Table& t) {
  const auto c_country = t.column("country"), c_industry = t.column("industry"),
             c_year = t.column("year"), c_ki = t.column("k_i"), c_lh = t.column("l_h"),
             c_lu = t.column("l_u");
  IndustryCellSeries out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    IndustryCell c;
    c.country = csv::field(t, row, c_country);
    c.industry = csv::field(t, row, c_industry);
    c.year = csv::parse_int(t, row, c_year);
    c.k_i = csv::parse_double(t, row, c_ki);
    c.l_h = csv::parse_double(t, row, c_lh);
    c.l_u = csv::parse_double(t, row, c_lu);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::string> check_industry(const IndustryCellSeries& cells) {
  std::vector<std::string> issues;
  std::set<std::tuple<std::string, std::string, int>> seen;
  std::map<std::string, std::set<std::string>> industries;
  std::map<std::string, std::set<int>> years;
  for (const auto& c : cells) {
    if (!(c.k_i > 0.0 && c.l_h > 0.0 && c.l_u > 0.0) ||
        !std::isfinite(c.k_i + c.l_h + c.l_u)) {
      issues.push_back(fmt::format("industry: nonpositive quantity at ({}, {}, {})", c.country,
                                   c.industry, c.year));
    }
    if (!seen.emplace(c.country, c.industry, c.year).second) {
      issues.push_back(
          fmt::format("industry: duplicate key ({}, {}, {})", c.country, c.industry, c.year));
    }
    industries[c.country].insert(c.industry);
    years[c.country].insert(c.year);
  }
  if (!industries.empty()) {
    const auto& reference = industries.begin()->second;
    for (const auto& [country, ids] : industries) {
      if (ids != reference) {
        issues.push_back(fmt::format("industry: country {} has industry set {{{}}}, expected {{{}}}",
                                     country, fmt::join(ids, ","), fmt::join(reference, ",")));
      }
    }
  }
  for (const auto& [country, ys] : years) {
    if (*ys.rbegin() - *ys.begin() + 1 != static_cast<int>(ys.size())) {
      issues.push_back(fmt::format("industry: country {} has gaps in years", country));
    }
  }
  return issues;
}

void write_industry(std::ostream& out, const IndustryCellSeries& cells) {
  csv::Writer w(out);
  w.row({"country", "industry", "year", "k_i", "l_h", "l_u"});
  for (const auto& c : cells) {
    w.row({c.country, c.industry, std::to_string(c.year), csv::format_double(c.k_i),
           csv::format_double(c.l_h), csv::format_double(c.l_u)});
  }
}

IndustryPanel::IndustryPanel(const IndustryCellSeries& cells) {
  const auto issues = check_industry(cells);
  if (!issues.empty()) {
    throw ValidationError(fmt::format("invalid industry panel:\n  {}", fmt::join(issues, "\n  ")));
  }
  std::set<std::string> industries;
  for (const auto& c : cells) {
    cells_[c.country][c.year][c.industry] = c;
    industries.insert(c.industry);
  }
  for (const auto& [country, years] : cells_) countries_.push_back(country);
  industries_.assign(industries.begin(), industries.end());
}

bool IndustryPanel::has(const std::string& country, int year) const {
  const auto it = cells_.find(country);
  return it != cells_.end() && it->second.contains(year);
}

int IndustryPanel::first_year(const std::string& country) const {
  const auto it = cells_.find(country);
  if (it == cells_.end()) throw ValidationError("unknown country " + country);
  return it->second.begin()->first;
}

int IndustryPanel::last_year(const std::string& country) const {
  const auto it = cells_.find(country);
  if (it == cells_.end()) throw ValidationError("unknown country " + country);
  return it->second.rbegin()->first;
}

const IndustryCell* IndustryPanel::find(const std::string& country,
                                        const std::string& industry, int year) const {
  const auto c = cells_.find(country);
  if (c == cells_.end()) return nullptr;
  const auto y = c->second.find(year);
  if (y == c->second.end()) return nullptr;
  const auto d = y->second.find(industry);
  return d == y->second.end() ? nullptr : &d->second;
}

double IndustryPanel::country_total(const std::string& country, Quantity q, int year) const {
  const auto c = cells_.find(country);
  if (c == cells_.end()) throw ValidationError("unknown country " + country);
  const auto y = c->second.find(year);
  if (y == c->second.end()) {
    throw ValidationError(fmt::format("no industry data for ({}, {})", country, year));
  }
  double total = 0.0;
  for (const auto& [id, cell] : y->second) total += cell.get(q);
  return total;
}

namespace {

struct BaseShares {
  std::vector<std::pair<std::string, double>> shares;  // industries with positive share
};

BaseShares base_shares(const IndustryPanel& panel, Quantity q, const std::string& country,
                       int base_year) {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> raw;
  for (const auto& d : panel.industries()) {
    const IndustryCell* cell = panel.find(country, d, base_year);
    const double v = cell ? cell->get(q) : 0.0;
    total += v;
    raw.emplace_back(d, v);
  }
  if (!(total > 0.0)) {
    throw ValidationError(fmt::format("zero base-year total of {} for ({}, {})", to_string(q),
                                      country, base_year));
  }
  BaseShares out;
  for (const auto& [d, v] : raw) {
    if (v > 0.0) out.shares.emplace_back(d, v / total);
  }
  return out;
}

// Annual leave-one-out log growth of industry d between year-1 and year.
double leave_one_out_growth(const IndustryPanel& panel, Quantity q,
                            const std::string& country, const std::string& industry,
                            int year) {
  double now = 0.0;
  double before = 0.0;
  int others = 0;
  for (const auto& other : panel.countries()) {
    if (other == country) continue;
    const IndustryCell* a = panel.find(other, industry, year);
    const IndustryCell* b = panel.find(other, industry, year - 1);
    if (a == nullptr || b == nullptr) continue;
    now += a->get(q);
    before += b->get(q);
    ++others;
  }
  if (others == 0) {
    throw ValidationError(fmt::format(
        "empty leave-one-out set for ({}, {}, {}): shift-share needs at least two countries",
        country, industry, year));
  }
  if (!(now > 0.0 && before > 0.0)) {
    throw ValidationError(fmt::format("nonpositive leave-one-out total for ({}, {}, {})",
                                      country, industry, year));
  }
  return std::log(now) - std::log(before);
}

// Cumulative levels for every year from base_year to last_year.
std::vector<double> shift_share_path(const IndustryPanel& panel, Quantity q,
                                     const std::string& country, int base_year,
                                     int last_year) {
  const BaseShares shares = base_shares(panel, q, country, base_year);
  std::vector<double> levels(static_cast<std::size_t>(last_year - base_year + 1), 0.0);
  for (int year = base_year + 1; year <= last_year; ++year) {
    double step = 0.0;
    for (const auto& [d, share] : shares.shares) {
      step += share * leave_one_out_growth(panel, q, country, d, year);
    }
    levels[static_cast<std::size_t>(year - base_year)] =
        levels[static_cast<std::size_t>(year - base_year - 1)] + step;
  }
  return levels;
}

}  // namespace

double shift_share_level(const IndustryPanel& panel, Quantity q, const std::string& country,
                         int year, int base_year) {
  if (year < base_year) {
    throw ValidationError(
        fmt::format("year {} precedes the shift-share base year {}", year, base_year));
  }
  if (!panel.has(country, base_year)) {
    throw ValidationError(fmt::format("no industry data for ({}, {})", country, base_year));
  }
  return shift_share_path(panel, q, country, base_year, year).back();
}

double shift_share_level(const IndustryPanel& panel, Quantity q, const std::string& country,
                         int year) {
  return shift_share_level(panel, q, country, year, panel.first_year(country));
}

std::string_view to_string(InstrumentKind kind) {
  return kind == InstrumentKind::shift_share ? "shift_share" : "lagged";
}

InstrumentKind parse_instrument_kind(std::string_view text) {
  if (text == "shift_share") return InstrumentKind::shift_share;
  if (text == "lagged") return InstrumentKind::lagged;
  throw ValidationError(fmt::format("unknown instrument kind '{}'", text));
}

InstrumentOptions InstrumentOptions::defaults_for(InstrumentKind kind) {
  InstrumentOptions o;
  o.kind = kind;
  o.horizon = kind == InstrumentKind::shift_share ? 5 : 1;
  return o;
}

const InstrumentRow* InstrumentSeries::find(const std::string& country, int year) const {
  const auto it = std::lower_bound(rows.begin(), rows.end(), std::pair{country, year},
                                   [](const InstrumentRow& r, const auto& key) {
                                     return std::tie(r.country, r.year) <
                                            std::tie(key.first, key.second);
                                   });
  if (it == rows.end() || it->country != country || it->year != year) return nullptr;
  return &*it;
}

InstrumentSeries build_instruments(const IndustryPanel& panel,
                                   const InstrumentOptions& options) {
  if (options.horizon < 1) {
    throw ValidationError(fmt::format("horizon must be >= 1, got {}", options.horizon));
  }
  InstrumentSeries out;
  out.kind = options.kind;
  out.horizon = options.horizon;

  if (options.kind == InstrumentKind::shift_share) {
    out.names = {"dln_lh_lu_ss", "dln_ki_lh_ss"};
    out.equation = {1, 2};
    for (const auto& country : panel.countries()) {
      const int t0 = panel.first_year(country);
      const int t1 = panel.last_year(country);
      if (t1 - t0 < options.horizon) {
        throw ValidationError(fmt::format(
            "country {} spans {}-{}, too short for horizon {}", country, t0, t1, options.horizon));
      }
      const auto ki = shift_share_path(panel, Quantity::k_i, country, t0, t1);
      const auto lh = shift_share_path(panel, Quantity::l_h, country, t0, t1);
      const auto lu = shift_share_path(panel, Quantity::l_u, country, t0, t1);
      for (int t = t0 + options.horizon; t <= t1; ++t) {
        const auto i = static_cast<std::size_t>(t - t0);
        const auto j = static_cast<std::size_t>(t - options.horizon - t0);
        out.rows.push_back({country, t,
                            {(lh[i] - lu[i]) - (lh[j] - lu[j]),
                             (ki[i] - lh[i]) - (ki[j] - lh[j])}});
      }
    }
  } else {
    if (options.lags.empty()) throw ValidationError("lagged instruments need at least one lag");
    std::vector<int> lags = options.lags;
    std::sort(lags.begin(), lags.end());
    if (lags.front() < 1) throw ValidationError("lags must be >= 1");
    for (int lag : lags) {
      out.names.push_back(fmt::format("ln_lh_lu_lag{}", lag));
      out.equation.push_back(1);
    }
    for (int lag : lags) {
      out.names.push_back(fmt::format("ln_ki_lh_lag{}", lag));
      out.equation.push_back(2);
    }
    const int max_lag = lags.back();
    for (const auto& country : panel.countries()) {
      const int t0 = panel.first_year(country);
      const int t1 = panel.last_year(country);
      if (t0 + max_lag + options.horizon > t1) {
        throw ValidationError(fmt::format(
            "country {} spans {}-{}, too short for lag {} with horizon {}", country, t0, t1,
            max_lag, options.horizon));
      }
      for (int t = t0 + max_lag + options.horizon; t <= t1; ++t) {
        InstrumentRow row{country, t, {}};
        for (int lag : lags) {
          row.values.push_back(std::log(panel.country_total(country, Quantity::l_h, t - lag)) -
                               std::log(panel.country_total(country, Quantity::l_u, t - lag)));
        }
        for (int lag : lags) {
          row.values.push_back(std::log(panel.country_total(country, Quantity::k_i, t - lag)) -
                               std::log(panel.country_total(country, Quantity::l_h, t - lag)));
        }
        out.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

void write_instruments(std::ostream& out, const InstrumentSeries& series) {
  csv::Writer w(out);
  std::vector<std::string> header = {"country", "year"};
  header.insert(header.end(), series.names.begin(), series.names.end());
  w.row(header);
  for (const auto& r : series.rows) {
    std::vector<std::string> fields = {r.country, std::to_string(r.year)};
    for (double v : r.values) fields.push_back(csv::format_double(v));
    w.row(fields);
  }
}

InstrumentSeries parse_instruments(const csv::Table& t, int horizon, InstrumentKind kind) {
  InstrumentSeries s;
  s.kind = kind;
  s.horizon = horizon;
  const auto c_country = t.column("country"), c_year = t.column("year");
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i == c_country || i == c_year) continue;
    const std::string& name = t.header[i];
    int eq = 0;
    if (name.find("lh_lu") != std::string::npos) eq = 1;
    if (name.find("ki_lh") != std::string::npos) eq = 2;
    if (eq == 0) {
      throw ParseError(t.source, 1, static_cast<int>(i) + 1,
                       fmt::format("cannot tell which equation '{}' instruments", name));
    }
    s.names.push_back(name);
    s.equation.push_back(eq);
    cols.push_back(i);
  }
  for (const auto& row : t.rows) {
    InstrumentRow r{csv::field(t, row, c_country), csv::parse_int(t, row, c_year), {}};
    for (std::size_t c : cols) r.values.push_back(csv::parse_double(t, row, c));
    s.rows.push_back(std::move(r));
  }
  std::sort(s.rows.begin(), s.rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.country, a.year) < std::tie(b.country, b.year);
  });
  return s;
}

double condition_number(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  const double tol = std::numeric_limits<double>::epsilon() *
                     static_cast<double>(std::max(m.rows(), m.cols())) * sv(0);
  if (!(smin > tol)) return std::numeric_limits<double>::infinity();
  return sv(0) / smin;
}

Eigen::MatrixXd instrument_matrix(const InstrumentSeries& series) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(series.rows.size()),
                    static_cast<Eigen::Index>(series.names.size()));
  for (std::size_t i = 0; i < series.rows.size(); ++i) {
    for (std::size_t j = 0; j < series.names.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = series.rows[i].values[j];
    }
  }
  return m;
}

}  // namespace ces_skill
