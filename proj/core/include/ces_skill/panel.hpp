#pragma once

// Country-year panel ingestion, labor composition adjustment and the
// user-cost construction of capital rental prices.
//
// Values are taken as already comparable across countries and years: no PPP
// conversion or deflation happens here.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ces_skill/csv.hpp"
#include "ces_skill/instruments.hpp"

namespace ces_skill {

enum class Skill { high, medium, low };
// `all` marks countries whose labor data carry no gender or age breakdown.
enum class Gender { male, female, all };
enum class AgeGroup { young, middle, old, all };
enum class Asset { ict, non_ict };
enum class SkillType { skilled, unskilled };

std::string_view to_string(Skill v);
std::string_view to_string(Gender v);
std::string_view to_string(AgeGroup v);
std::string_view to_string(Asset v);
std::string_view to_string(SkillType v);

struct RawLaborCell {
  std::string country;
  int year = 0;
  Skill skill = Skill::high;
  Gender gender = Gender::all;
  AgeGroup age = AgeGroup::all;
  double wage = 0.0;   // per hour
  double hours = 0.0;
};

struct InvestmentCell {
  std::string country;
  int year = 0;
  Asset asset = Asset::ict;
  double q = 0.0;      // investment price: nominal over real investment
  double delta = 0.0;  // depreciation rate per year
};

struct CpiSeries {
  std::string country;
  std::map<int, double> levels;
};

struct CountryYearRecord {
  std::string country;
  int year = 0;
  double w_h = 0.0;
  double w_u = 0.0;
  double r_i = 0.0;
  double r_o = 0.0;
  double k_i = 0.0;
  double k_o = 0.0;
  double l_h = 0.0;
  double l_u = 0.0;

  friend bool operator==(const CountryYearRecord&, const CountryYearRecord&) = default;
};

struct LaborGroup {
  Skill skill = Skill::high;
  Gender gender = Gender::male;
  AgeGroup age = AgeGroup::middle;

  friend auto operator<=>(const LaborGroup&, const LaborGroup&) = default;
};

struct LaborAdjustmentConfig {
  std::map<Skill, SkillType> classification = {{Skill::high, SkillType::skilled},
                                               {Skill::medium, SkillType::unskilled},
                                               {Skill::low, SkillType::unskilled}};
  LaborGroup skilled_base{Skill::high, Gender::male, AgeGroup::middle};
  LaborGroup unskilled_base{Skill::medium, Gender::male, AgeGroup::middle};
};

struct LaborKey {
  std::string country;
  int year = 0;
  SkillType type = SkillType::skilled;

  friend auto operator<=>(const LaborKey&, const LaborKey&) = default;
};

using AdjustedLabor = std::map<LaborKey, double>;

// Composition-adjusted wages: hours-share weights fixed at their
// country-specific mean over the observed years.
AdjustedLabor adjust_wages(const std::vector<RawLaborCell>& cells,
                           const LaborAdjustmentConfig& config = {});

// Efficiency hours: each group's hours weighted by its country-mean wage
// relative to the base group's country-mean wage.
AdjustedLabor adjust_hours(const std::vector<RawLaborCell>& cells,
                           const LaborAdjustmentConfig& config = {});

// i_t = 0.04 + mean of the five annual CPI inflation rates ending t-2..t+2.
double interest_rate(const CpiSeries& cpi, int year);

// r_t = delta q_t + i_t q_{t-1} - (ln q_t - ln q_{t-2}) q_{t-1} / 2 for one
// (country, asset) investment series.
double rental_price(const std::vector<InvestmentCell>& series, const CpiSeries& cpi,
                    int year);

struct PanelFiles {
  std::optional<std::filesystem::path> labor;
  std::optional<std::filesystem::path> investment;
  std::optional<std::filesystem::path> cpi;
  std::optional<std::filesystem::path> panel;
  std::optional<std::filesystem::path> industry;
};

struct FileReport {
  std::string file;
  std::size_t rows = 0;
  std::map<std::string, std::pair<int, int>> year_ranges;
  std::vector<std::string> issues;

  bool ok() const { return issues.empty(); }
};

struct PanelData {
  std::vector<RawLaborCell> labor;
  std::vector<InvestmentCell> investment;
  std::vector<CpiSeries> cpi;
  std::vector<CountryYearRecord> records;  // sorted by (country, year)
  IndustryCellSeries industry;
  std::vector<FileReport> reports;
};

// Reads and validates every file present in `files`. Malformed text raises
// ParseError with its location; invariant violations raise ValidationError
// listing the offending keys.
PanelData load_panel(const PanelFiles& files);

// Same checks as load_panel but never throws: every problem becomes an issue
// line in the per-file report.
std::vector<FileReport> validate_files(const PanelFiles& files);

// Parsers from an already-read table; they throw ParseError only.
std::vector<RawLaborCell> parse_labor(const csv::Table& t);
std::vector<InvestmentCell> parse_investment(const csv::Table& t);
std::vector<CpiSeries> parse_cpi(const csv::Table& t);
std::vector<CountryYearRecord> parse_records(const csv::Table& t);

// Invariant checks; each returned string names one offending key.
std::vector<std::string> check_labor(const std::vector<RawLaborCell>& cells);
std::vector<std::string> check_investment(const std::vector<InvestmentCell>& cells);
std::vector<std::string> check_cpi(const std::vector<CpiSeries>& series);
std::vector<std::string> check_records(const std::vector<CountryYearRecord>& records);

void write_records(std::ostream& out, const std::vector<CountryYearRecord>& records);
void write_labor(std::ostream& out, const std::vector<RawLaborCell>& cells);
void write_investment(std::ostream& out, const std::vector<InvestmentCell>& cells);
void write_cpi(std::ostream& out, const std::vector<CpiSeries>& series);

// Writes records to `path` as panel.csv.
void save_panel(const std::vector<CountryYearRecord>& records,
                const std::filesystem::path& path);

// Records grouped by country, each group sorted by year.
std::map<std::string, std::vector<CountryYearRecord>> by_country(
    const std::vector<CountryYearRecord>& records);

}  // namespace ces_skill
