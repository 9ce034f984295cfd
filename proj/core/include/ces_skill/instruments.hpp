#pragma once

// Shift-share and lagged-level instruments built from country x industry
// input quantities.

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ces_skill/csv.hpp"

namespace ces_skill {

enum class Quantity { k_i, l_h, l_u };

std::string_view to_string(Quantity q);

struct IndustryCell {
  std::string country;
  std::string industry;
  int year = 0;
  double k_i = 0.0;
  double l_h = 0.0;
  double l_u = 0.0;

  double get(Quantity q) const;
  friend bool operator==(const IndustryCell&, const IndustryCell&) = default;
};

using IndustryCellSeries = std::vector<IndustryCell>;

IndustryCellSeries parse_industry(const csv::Table& t);
std::vector<std::string> check_industry(const IndustryCellSeries& cells);
void write_industry(std::ostream& out, const IndustryCellSeries& cells);

// Validated, indexed view of an industry panel.
class IndustryPanel {
 public:
  // Throws ValidationError when cells are nonpositive, duplicated, or countries
  // disagree on the industry set.
  explicit IndustryPanel(const IndustryCellSeries& cells);

  const std::vector<std::string>& countries() const { return countries_; }
  const std::vector<std::string>& industries() const { return industries_; }
  bool has(const std::string& country, int year) const;
  int first_year(const std::string& country) const;
  int last_year(const std::string& country) const;
  // Quantity for (country, industry, year), or nullptr when absent.
  const IndustryCell* find(const std::string& country, const std::string& industry,
                           int year) const;
  // Sum over industries for one country-year.
  double country_total(const std::string& country, Quantity q, int year) const;

 private:
  std::vector<std::string> countries_;
  std::vector<std::string> industries_;
  std::map<std::string, std::map<int, std::map<std::string, IndustryCell>>> cells_;
};

// Cumulative shift-share log level, 0 at `base_year`:
//   sum over s in (base_year, year] of sum_d share_{c,d,base} dln(sum_{c' != c} z_{c',d,s}).
// Leave-one-out growth between s-1 and s uses the other countries observed
// in both years. Industries with zero base-year quantity drop out.
double shift_share_level(const IndustryPanel& panel, Quantity q,
                         const std::string& country, int year, int base_year);

// Same, with the base year at the country's first observed year.
double shift_share_level(const IndustryPanel& panel, Quantity q,
                         const std::string& country, int year);

enum class InstrumentKind { shift_share, lagged };

std::string_view to_string(InstrumentKind kind);
InstrumentKind parse_instrument_kind(std::string_view text);

struct InstrumentOptions {
  InstrumentKind kind = InstrumentKind::shift_share;
  int horizon = 5;
  std::vector<int> lags = {2, 3, 4};

  // Horizon 5 for shift-share, 1 for lagged.
  static InstrumentOptions defaults_for(InstrumentKind kind);
};

struct InstrumentRow {
  std::string country;
  int year = 0;
  std::vector<double> values;
};

struct InstrumentSeries {
  InstrumentKind kind = InstrumentKind::shift_share;
  int horizon = 5;
  std::vector<std::string> names;
  // Estimating equation each column instruments: 1 = skill premium,
  // 2 = skilled wage over ICT rental.
  std::vector<int> equation;
  std::vector<InstrumentRow> rows;

  const InstrumentRow* find(const std::string& country, int year) const;
};

// Shift-share: five-year (by default) changes of ln(l_h^b/l_u^b) and
// ln(k_i^b/l_h^b). Lagged: ln(l_h/l_u) and ln(k_i/l_h) country totals at t-lag,
// emitted for years t >= t0 + max(lag) + horizon.
InstrumentSeries build_instruments(const IndustryPanel& panel,
                                   const InstrumentOptions& options);

void write_instruments(std::ostream& out, const InstrumentSeries& series);
InstrumentSeries parse_instruments(const csv::Table& t, int horizon,
                                   InstrumentKind kind);

// 2-norm condition number of a matrix (ratio of extreme singular values);
// infinity for rank-deficient input.
double condition_number(const Eigen::MatrixXd& m);

// Instrument matrix with one row per (country, year) and one column per series.
Eigen::MatrixXd instrument_matrix(const InstrumentSeries& series);

}  // namespace ces_skill
