#include "ces_skill/panel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "ces_skill/error.hpp"

namespace ces_skill {
namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const csv::Table& t, const csv::Row& row, std::size_t col,
                const std::array<std::pair<std::string_view, Enum>, N>& names) {
  const std::string& s = csv::field(t, row, col);
  for (const auto& [name, value] : names) {
    if (s == name) return value;
  }
  throw ParseError(t.source, row.line, static_cast<int>(col) + 1,
                   fmt::format("unknown {} '{}'", t.header[col], s));
}

constexpr std::array<std::pair<std::string_view, Skill>, 3> kSkillNames = {
    {{"high", Skill::high}, {"medium", Skill::medium}, {"low", Skill::low}}};
constexpr std::array<std::pair<std::string_view, Gender>, 3> kGenderNames = {
    {{"male", Gender::male}, {"female", Gender::female}, {"all", Gender::all}}};
constexpr std::array<std::pair<std::string_view, AgeGroup>, 4> kAgeNames = {
    {{"young", AgeGroup::young},
     {"middle", AgeGroup::middle},
     {"old", AgeGroup::old},
     {"all", AgeGroup::all}}};
constexpr std::array<std::pair<std::string_view, Asset>, 2> kAssetNames = {
    {{"ict", Asset::ict}, {"non_ict", Asset::non_ict}}};

std::string group_name(const LaborGroup& g) {
  return fmt::format("{}/{}/{}", to_string(g.skill), to_string(g.gender), to_string(g.age));
}

// Years of each country must form one unbroken range.
void check_contiguous(const std::map<std::string, std::set<int>>& years,
                      std::string_view what, std::vector<std::string>& issues) {
  for (const auto& [country, ys] : years) {
    if (ys.empty()) continue;
    const int span = *ys.rbegin() - *ys.begin() + 1;
    if (span != static_cast<int>(ys.size())) {
      std::vector<int> missing;
      for (int y = *ys.begin(); y <= *ys.rbegin(); ++y) {
        if (!ys.contains(y)) missing.push_back(y);
      }
      issues.push_back(fmt::format("{}: country {} has gaps in years: missing {}", what,
                                   country, fmt::join(missing, " ")));
    }
  }
}

// Per (country, skill type): year -> group -> cell.
using GroupedLabor =
    std::map<std::pair<std::string, SkillType>,
             std::map<int, std::map<LaborGroup, const RawLaborCell*>>>;

GroupedLabor group_labor(const std::vector<RawLaborCell>& cells,
                         const LaborAdjustmentConfig& config) {
  GroupedLabor out;
  for (const auto& c : cells) {
    const auto it = config.classification.find(c.skill);
    if (it == config.classification.end()) {
      throw ValidationError(
          fmt::format("skill level '{}' has no skill-type classification", to_string(c.skill)));
    }
    auto& slot = out[{c.country, it->second}][c.year][LaborGroup{c.skill, c.gender, c.age}];
    if (slot != nullptr) {
      throw ValidationError(fmt::format("duplicate labor cell ({}, {}, {})", c.country, c.year,
                                        group_name({c.skill, c.gender, c.age})));
    }
    slot = &c;
  }
  // Every group of a (country, type) must appear in every year it is observed.
  for (const auto& [key, years] : out) {
    std::set<LaborGroup> groups;
    for (const auto& [year, gs] : years) {
      for (const auto& [g, cell] : gs) groups.insert(g);
    }
    for (const auto& [year, gs] : years) {
      for (const auto& g : groups) {
        if (!gs.contains(g)) {
          throw ValidationError(fmt::format("missing labor group {} for ({}, {}, {})",
                                            group_name(g), key.first, year,
                                            to_string(key.second)));
        }
      }
    }
  }
  return out;
}

LaborGroup resolve_base(const std::map<LaborGroup, const RawLaborCell*>& groups,
                        const LaborGroup& wanted, const std::string& country,
                        SkillType type) {
  const LaborGroup candidates[] = {
      wanted,
      {wanted.skill, wanted.gender, AgeGroup::all},
      {wanted.skill, Gender::all, wanted.age},
      {wanted.skill, Gender::all, AgeGroup::all},
  };
  for (const auto& c : candidates) {
    if (groups.contains(c)) return c;
  }
  throw ValidationError(fmt::format("missing base group {} for ({}, {})", group_name(wanted),
                                    country, to_string(type)));
}

}  // namespace

std::string_view to_string(Skill v) {
  for (const auto& [n, e] : kSkillNames) if (e == v) return n;
  return "?";
}
std::string_view to_string(Gender v) {
  for (const auto& [n, e] : kGenderNames) if (e == v) return n;
  return "?";
}
std::string_view to_string(AgeGroup v) {
  for (const auto& [n, e] : kAgeNames) if (e == v) return n;
  return "?";
}
std::string_view to_string(Asset v) {
  for (const auto& [n, e] : kAssetNames) if (e == v) return n;
  return "?";
}
std::string_view to_string(SkillType v) {
  return v == SkillType::skilled ? "skilled" : "unskilled";
}

AdjustedLabor adjust_wages(const std::vector<RawLaborCell>& cells,
                           const LaborAdjustmentConfig& config) {
  AdjustedLabor out;
  for (const auto& [key, years] : group_labor(cells, config)) {
    std::map<LaborGroup, double> mean_share;
    for (const auto& [year, groups] : years) {
      double total = 0.0;
      for (const auto& [g, cell] : groups) total += cell->hours;
      if (!(total > 0.0)) {
        throw ValidationError(fmt::format("no hours worked for ({}, {}, {})", key.first, year,
                                          to_string(key.second)));
      }
      for (const auto& [g, cell] : groups) mean_share[g] += cell->hours / total;
    }
    for (auto& [g, s] : mean_share) s /= static_cast<double>(years.size());
    for (const auto& [year, groups] : years) {
      double w = 0.0;
      for (const auto& [g, cell] : groups) w += mean_share.at(g) * cell->wage;
      out[{key.first, year, key.second}] = w;
    }
  }
  return out;
}

AdjustedLabor adjust_hours(const std::vector<RawLaborCell>& cells,
                           const LaborAdjustmentConfig& config) {
  AdjustedLabor out;
  for (const auto& [key, years] : group_labor(cells, config)) {
    if (years.empty()) continue;
    std::map<LaborGroup, double> mean_wage;
    for (const auto& [year, groups] : years) {
      for (const auto& [g, cell] : groups) mean_wage[g] += cell->wage;
    }
    for (auto& [g, w] : mean_wage) w /= static_cast<double>(years.size());
    const LaborGroup& wanted =
        key.second == SkillType::skilled ? config.skilled_base : config.unskilled_base;
    const LaborGroup base =
        resolve_base(years.begin()->second, wanted, key.first, key.second);
    const double base_wage = mean_wage.at(base);
    for (const auto& [year, groups] : years) {
      double hours = 0.0;
      for (const auto& [g, cell] : groups) hours += mean_wage.at(g) / base_wage * cell->hours;
      out[{key.first, year, key.second}] = hours;
    }
  }
  return out;
}

double interest_rate(const CpiSeries& cpi, int year) {
  std::vector<int> missing;
  for (int y = year - 3; y <= year + 2; ++y) {
    if (!cpi.levels.contains(y)) missing.push_back(y);
  }
  if (!missing.empty()) {
    throw ValidationError(fmt::format("interest rate for {} in {} needs CPI for {}-{}; missing {}",
                                      cpi.country, year, year - 3, year + 2,
                                      fmt::join(missing, " ")));
  }
  double inflation = 0.0;
  for (int tau = -2; tau <= 2; ++tau) {
    const double now = cpi.levels.at(year - tau);
    const double before = cpi.levels.at(year - tau - 1);
    inflation += (now - before) / before;
  }
  return 0.04 + inflation / 5.0;
}

double rental_price(const std::vector<InvestmentCell>& series, const CpiSeries& cpi,
                    int year) {
  const InvestmentCell* at[3] = {nullptr, nullptr, nullptr};  // t, t-1, t-2
  for (const auto& c : series) {
    const int lag = year - c.year;
    if (lag >= 0 && lag <= 2) at[lag] = &c;
  }
  for (int lag = 0; lag <= 2; ++lag) {
    if (at[lag] == nullptr) {
      throw ValidationError(fmt::format("rental price for {} needs investment price in {}",
                                        year, year - lag));
    }
  }
  const double q_t = at[0]->q;
  const double q_1 = at[1]->q;
  const double q_2 = at[2]->q;
  if (!(q_t > 0.0 && q_1 > 0.0 && q_2 > 0.0)) {
    throw DomainError("investment prices must be positive");
  }
  const double i_t = interest_rate(cpi, year);
  return at[0]->delta * q_t + i_t * q_1 -
         0.5 * (std::log(q_t) - std::log(q_2)) * q_1;
}

std::vector<RawLaborCell> parse_labor(const csv::Table& t) {
  const auto c_country = t.column("country"), c_year = t.column("year"),
             c_skill = t.column("skill"), c_gender = t.column("gender"),
             c_age = t.column("age"), c_wage = t.column("wage"),
             c_hours = t.column("hours");
  std::vector<RawLaborCell> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    RawLaborCell c;
    c.country = csv::field(t, row, c_country);
    c.year = csv::parse_int(t, row, c_year);
    c.skill = parse_enum(t, row, c_skill, kSkillNames);
    c.gender = parse_enum(t, row, c_gender, kGenderNames);
    c.age = parse_enum(t, row, c_age, kAgeNames);
    c.wage = csv::parse_double(t, row, c_wage);
    c.hours = csv::parse_double(t, row, c_hours);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<InvestmentCell> parse_investment(const csv::Table& t) {
  const auto c_country = t.column("country"), c_year = t.column("year"),
             c_asset = t.column("asset"), c_q = t.column("q"), c_delta = t.column("delta");
  std::vector<InvestmentCell> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    InvestmentCell c;
    c.country = csv::field(t, row, c_country);
    c.year = csv::parse_int(t, row, c_year);
    c.asset = parse_enum(t, row, c_asset, kAssetNames);
    c.q = csv::parse_double(t, row, c_q);
    c.delta = csv::parse_double(t, row, c_delta);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CpiSeries> parse_cpi(const csv::Table& t) {
  const auto c_country = t.column("country"), c_year = t.column("year"),
             c_cpi = t.column("cpi");
  std::map<std::string, CpiSeries> series;
  for (const auto& row : t.rows) {
    const std::string& country = csv::field(t, row, c_country);
    auto& s = series[country];
    s.country = country;
    const int year = csv::parse_int(t, row, c_year);
    const double level = csv::parse_double(t, row, c_cpi);
    if (!s.levels.emplace(year, level).second) {
      throw ParseError(t.source, row.line, static_cast<int>(c_year) + 1,
                       fmt::format("duplicate key ({}, {})", country, year));
    }
  }
  std::vector<CpiSeries> out;
  for (auto& [k, s] : series) out.push_back(std::move(s));
  return out;
}

std::vector<CountryYearRecord> parse_records(const csv::Table& t) {
  const std::size_t cols[] = {t.column("w_h"), t.column("w_u"), t.column("r_i"),
                              t.column("r_o"), t.column("k_i"), t.column("k_o"),
                              t.column("l_h"), t.column("l_u")};
  const auto c_country = t.column("country"), c_year = t.column("year");
  std::vector<CountryYearRecord> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    CountryYearRecord r;
    r.country = csv::field(t, row, c_country);
    r.year = csv::parse_int(t, row, c_year);
    double* targets[] = {&r.w_h, &r.w_u, &r.r_i, &r.r_o, &r.k_i, &r.k_o, &r.l_h, &r.l_u};
    for (std::size_t i = 0; i < 8; ++i) *targets[i] = csv::parse_double(t, row, cols[i]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> check_labor(const std::vector<RawLaborCell>& cells) {
  std::vector<std::string> issues;
  std::set<std::tuple<std::string, int, Skill, Gender, AgeGroup>> seen;
  for (const auto& c : cells) {
    const std::string key = fmt::format("({}, {}, {})", c.country, c.year,
                                        group_name({c.skill, c.gender, c.age}));
    if (!(c.wage > 0.0) || !std::isfinite(c.wage)) {
      issues.push_back(fmt::format("labor: nonpositive wage {} at {}", c.wage, key));
    }
    if (!(c.hours >= 0.0) || !std::isfinite(c.hours)) {
      issues.push_back(fmt::format("labor: negative hours {} at {}", c.hours, key));
    }
    if (!seen.emplace(c.country, c.year, c.skill, c.gender, c.age).second) {
      issues.push_back(fmt::format("labor: duplicate key {}", key));
    }
  }
  return issues;
}

std::vector<std::string> check_investment(const std::vector<InvestmentCell>& cells) {
  std::vector<std::string> issues;
  std::set<std::tuple<std::string, int, Asset>> seen;
  for (const auto& c : cells) {
    const std::string key = fmt::format("({}, {}, {})", c.country, c.year, to_string(c.asset));
    if (!(c.q > 0.0) || !std::isfinite(c.q)) {
      issues.push_back(fmt::format("investment: nonpositive q {} at {}", c.q, key));
    }
    if (!(c.delta > 0.0 && c.delta < 1.0)) {
      issues.push_back(fmt::format("investment: delta {} outside (0,1) at {}", c.delta, key));
    }
    if (!seen.emplace(c.country, c.year, c.asset).second) {
      issues.push_back(fmt::format("investment: duplicate key {}", key));
    }
  }
  return issues;
}

std::vector<std::string> check_cpi(const std::vector<CpiSeries>& series) {
  std::vector<std::string> issues;
  std::map<std::string, std::set<int>> years;
  for (const auto& s : series) {
    for (const auto& [year, level] : s.levels) {
      years[s.country].insert(year);
      if (!(level > 0.0) || !std::isfinite(level)) {
        issues.push_back(fmt::format("cpi: nonpositive level {} at ({}, {})", level,
                                     s.country, year));
      }
    }
  }
  check_contiguous(years, "cpi", issues);
  return issues;
}

std::vector<std::string> check_records(const std::vector<CountryYearRecord>& records) {
  std::vector<std::string> issues;
  std::map<std::string, std::set<int>> years;
  for (const auto& r : records) {
    const std::pair<const char*, double> values[] = {
        {"w_h", r.w_h}, {"w_u", r.w_u}, {"r_i", r.r_i}, {"r_o", r.r_o},
        {"k_i", r.k_i}, {"k_o", r.k_o}, {"l_h", r.l_h}, {"l_u", r.l_u}};
    for (const auto& [name, v] : values) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        issues.push_back(fmt::format("panel: nonpositive {} = {} at ({}, {})", name, v,
                                     r.country, r.year));
      }
    }
    if (!years[r.country].insert(r.year).second) {
      issues.push_back(fmt::format("panel: duplicate key ({}, {})", r.country, r.year));
    }
  }
  check_contiguous(years, "panel", issues);
  return issues;
}

namespace {

template <typename T, typename F>
FileReport report_for(const std::filesystem::path& path, T& sink, F&& parse_and_check) {
  FileReport rep;
  rep.file = path.string();
  try {
    const csv::Table table = csv::read_file(path);
    rep.rows = table.rows.size();
    rep.issues = parse_and_check(table, sink, rep);
  } catch (const Error& e) {
    rep.issues.push_back(e.what());
  }
  return rep;
}

template <typename Cells>
void fill_ranges(const Cells& cells, FileReport& rep) {
  for (const auto& c : cells) {
    auto [it, inserted] = rep.year_ranges.try_emplace(c.country, c.year, c.year);
    it->second.first = std::min(it->second.first, c.year);
    it->second.second = std::max(it->second.second, c.year);
  }
}

struct Loaded {
  PanelData data;
};

Loaded load_all(const PanelFiles& files) {
  Loaded out;
  PanelData& d = out.data;
  if (files.labor) {
    d.reports.push_back(report_for(*files.labor, d.labor, [](const csv::Table& t, auto& sink,
                                                              FileReport& rep) {
      sink = parse_labor(t);
      fill_ranges(sink, rep);
      return check_labor(sink);
    }));
  }
  if (files.investment) {
    d.reports.push_back(report_for(*files.investment, d.investment,
                                   [](const csv::Table& t, auto& sink, FileReport& rep) {
                                     sink = parse_investment(t);
                                     fill_ranges(sink, rep);
                                     return check_investment(sink);
                                   }));
  }
  if (files.cpi) {
    d.reports.push_back(report_for(*files.cpi, d.cpi, [](const csv::Table& t, auto& sink,
                                                          FileReport& rep) {
      sink = parse_cpi(t);
      for (const auto& s : sink) {
        if (!s.levels.empty()) {
          rep.year_ranges[s.country] = {s.levels.begin()->first, s.levels.rbegin()->first};
        }
      }
      return check_cpi(sink);
    }));
  }
  if (files.panel) {
    d.reports.push_back(report_for(*files.panel, d.records, [](const csv::Table& t,
                                                                auto& sink, FileReport& rep) {
      sink = parse_records(t);
      std::sort(sink.begin(), sink.end(), [](const auto& a, const auto& b) {
        return std::tie(a.country, a.year) < std::tie(b.country, b.year);
      });
      fill_ranges(sink, rep);
      return check_records(sink);
    }));
  }
  if (files.industry) {
    d.reports.push_back(report_for(*files.industry, d.industry,
                                   [](const csv::Table& t, auto& sink, FileReport& rep) {
                                     sink = parse_industry(t);
                                     fill_ranges(sink, rep);
                                     return check_industry(sink);
                                   }));
  }
  return out;
}

}  // namespace

std::vector<FileReport> validate_files(const PanelFiles& files) {
  return load_all(files).data.reports;
}

PanelData load_panel(const PanelFiles& files) {
  // Parse errors surface directly with their location.
  auto parse_only = [](const std::optional<std::filesystem::path>& p, auto parser) {
    if (p) parser(csv::read_file(*p));
  };
  parse_only(files.labor, parse_labor);
  parse_only(files.investment, parse_investment);
  parse_only(files.cpi, parse_cpi);
  parse_only(files.panel, parse_records);
  parse_only(files.industry, parse_industry);

  Loaded loaded = load_all(files);
  std::vector<std::string> issues;
  for (const auto& rep : loaded.data.reports) {
    for (const auto& i : rep.issues) issues.push_back(rep.file + ": " + i);
  }
  if (!issues.empty()) {
    throw ValidationError(fmt::format("{} invariant violation(s):\n  {}", issues.size(),
                                      fmt::join(issues, "\n  ")));
  }
  return std::move(loaded.data);
}

void write_records(std::ostream& out, const std::vector<CountryYearRecord>& records) {
  csv::Writer w(out);
  w.row({"country", "year", "w_h", "w_u", "r_i", "r_o", "k_i", "k_o", "l_h", "l_u"});
  for (const auto& r : records) {
    w.row({r.country, std::to_string(r.year), csv::format_double(r.w_h),
           csv::format_double(r.w_u), csv::format_double(r.r_i), csv::format_double(r.r_o),
           csv::format_double(r.k_i), csv::format_double(r.k_o), csv::format_double(r.l_h),
           csv::format_double(r.l_u)});
  }
}

void write_labor(std::ostream& out, const std::vector<RawLaborCell>& cells) {
  csv::Writer w(out);
  w.row({"country", "year", "skill", "gender", "age", "wage", "hours"});
  for (const auto& c : cells) {
    w.row({c.country, std::to_string(c.year), std::string(to_string(c.skill)),
           std::string(to_string(c.gender)), std::string(to_string(c.age)),
           csv::format_double(c.wage), csv::format_double(c.hours)});
  }
}

void write_investment(std::ostream& out, const std::vector<InvestmentCell>& cells) {
  csv::Writer w(out);
  w.row({"country", "year", "asset", "q", "delta"});
  for (const auto& c : cells) {
    w.row({c.country, std::to_string(c.year), std::string(to_string(c.asset)),
           csv::format_double(c.q), csv::format_double(c.delta)});
  }
}

void write_cpi(std::ostream& out, const std::vector<CpiSeries>& series) {
  csv::Writer w(out);
  w.row({"country", "year", "cpi"});
  for (const auto& s : series) {
    for (const auto& [year, level] : s.levels) {
      w.row({s.country, std::to_string(year), csv::format_double(level)});
    }
  }
}

void save_panel(const std::vector<CountryYearRecord>& records,
                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  write_records(out, records);
}

std::map<std::string, std::vector<CountryYearRecord>> by_country(
    const std::vector<CountryYearRecord>& records) {
  std::map<std::string, std::vector<CountryYearRecord>> out;
  for (const auto& r : records) out[r.country].push_back(r);
  for (auto& [c, rs] : out) {
    std::sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
  }
  return out;
}

}  // namespace ces_skill
