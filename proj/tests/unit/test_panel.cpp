#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "ces_skill/csv.hpp"
#include "ces_skill/error.hpp"
#include "ces_skill/panel.hpp"

using namespace ces_skill;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            fmt::format("ces_skill_panel_{}_{}", ::getpid(), counter_++);
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return path_ / name;
  }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

RawLaborCell cell(std::string country, int year, Skill s, Gender g, AgeGroup a, double wage,
                  double hours) {
  return {std::move(country), year, s, g, a, wage, hours};
}

CpiSeries flat_cpi(int from, int to, double level = 100.0) {
  CpiSeries s{"US", {}};
  for (int y = from; y <= to; ++y) s.levels[y] = level;
  return s;
}

const char* kPanelHeader = "country,year,w_h,w_u,r_i,r_o,k_i,k_o,l_h,l_u\n";

}  // namespace

TEST(Csv, SkipsCommentsAndKeepsLineNumbers) {
  std::istringstream in("# fingerprint\na,b\n1,2\n\n# mid\n3,4\n");
  const csv::Table t = csv::read(in, "x.csv");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1].line, 6);
  EXPECT_EQ(csv::parse_int(t, t.rows[1], 1), 4);
}

TEST(Csv, ParseErrorsCarryLocation) {
  std::istringstream in("a,b\n1,zz\n");
  const csv::Table t = csv::read(in, "x.csv");
  try {
    csv::parse_double(t, t.rows[0], 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.file(), "x.csv");
    EXPECT_EQ(e.row(), 2);
    EXPECT_EQ(e.column(), 2);
  }
  EXPECT_THROW(t.column("missing"), ParseError);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, 0.0}) {
    EXPECT_EQ(std::stod(csv::format_double(v)), v);
  }
}

TEST(LoadPanel, MinimalFileSet) {
  TempDir dir;
  PanelFiles f;
  f.panel = dir.write("panel.csv", std::string(kPanelHeader) +
                                       "US,2000,2,1,0.3,0.2,1,5,10,20\n"
                                       "US,2001,2.1,1,0.3,0.2,1.1,5,10,20\n");
  const PanelData d = load_panel(f);
  ASSERT_EQ(d.records.size(), 2u);
  EXPECT_EQ(d.records[1].year, 2001);
  EXPECT_DOUBLE_EQ(d.records[1].w_h, 2.1);
  ASSERT_EQ(d.reports.size(), 1u);
  EXPECT_EQ(d.reports[0].year_ranges.at("US"), std::make_pair(2000, 2001));
}

TEST(LoadPanel, NonpositiveWageNamesTheCell) {
  TempDir dir;
  PanelFiles f;
  f.labor = dir.write("labor.csv",
                      "country,year,skill,gender,age,wage,hours\n"
                      "US,2000,high,male,middle,-3,10\n");
  try {
    load_panel(f);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("US, 2000, high/male/middle"), std::string::npos) << msg;
  }
}

TEST(LoadPanel, DuplicateCountryYear) {
  TempDir dir;
  PanelFiles f;
  f.panel = dir.write("panel.csv", std::string(kPanelHeader) +
                                       "US,2000,2,1,0.3,0.2,1,5,10,20\n"
                                       "US,2000,2,1,0.3,0.2,1,5,10,20\n");
  EXPECT_THROW(load_panel(f), ValidationError);
  const auto reports = validate_files(f);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_FALSE(reports[0].ok());
}

TEST(LoadPanel, YearGapIsAnError) {
  TempDir dir;
  PanelFiles f;
  f.panel = dir.write("panel.csv", std::string(kPanelHeader) +
                                       "US,2000,2,1,0.3,0.2,1,5,10,20\n"
                                       "US,2002,2,1,0.3,0.2,1,5,10,20\n");
  EXPECT_THROW(load_panel(f), ValidationError);
}

TEST(LoadPanel, MalformedNumberIsParseError) {
  TempDir dir;
  PanelFiles f;
  f.panel = dir.write("panel.csv", std::string(kPanelHeader) + "US,2000,2,1,abc,0.2,1,5,10,20\n");
  try {
    load_panel(f);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2);
    EXPECT_EQ(e.column(), 5);
  }
}

TEST(LoadPanel, SaveRoundTripIsIdentity) {
  TempDir dir;
  std::vector<CountryYearRecord> recs = {
      {"AT", 1995, 1.0 / 3.0, 0.2, 0.31, 0.12, 1.7, 9.0, 3.3, 7.1},
      {"AT", 1996, 0.35, 0.21, 0.3, 0.125, 1.9, 9.3, 3.4, 7.0},
      {"BE", 1995, 0.4, 0.22, 0.29, 0.13, 2.1, 8.0, 4.4, 6.2}};
  const fs::path p = dir.write("panel.csv", "");
  save_panel(recs, p);
  PanelFiles f;
  f.panel = p;
  const auto back = load_panel(f).records;
  EXPECT_EQ(back, recs);
  std::ostringstream a, b;
  write_records(a, recs);
  write_records(b, back);
  EXPECT_EQ(a.str(), b.str());
}

TEST(AdjustWages, FixedWeightMean) {
  std::vector<RawLaborCell> cells = {
      cell("US", 2000, Skill::high, Gender::male, AgeGroup::middle, 10, 50),
      cell("US", 2000, Skill::high, Gender::female, AgeGroup::middle, 20, 50),
  };
  const auto w = adjust_wages(cells);
  EXPECT_DOUBLE_EQ(w.at({"US", 2000, SkillType::skilled}), 15.0);
}

TEST(AdjustWages, ShiftingSharesUseMeanShare) {
  // Group-1 hours shares 0.5, 0.6, 0.7 so the mean weight is 0.6.
  std::vector<RawLaborCell> cells;
  const double share[] = {0.5, 0.6, 0.7};
  const double w1[] = {10, 11, 12};
  const double w2[] = {20, 21, 23};
  for (int t = 0; t < 3; ++t) {
    cells.push_back(cell("US", 2000 + t, Skill::high, Gender::male, AgeGroup::middle, w1[t],
                         100 * share[t]));
    cells.push_back(cell("US", 2000 + t, Skill::high, Gender::female, AgeGroup::middle, w2[t],
                         100 * (1 - share[t])));
  }
  const auto w = adjust_wages(cells);
  for (int t = 0; t < 3; ++t) {
    EXPECT_NEAR(w.at({"US", 2000 + t, SkillType::skilled}), 0.6 * w1[t] + 0.4 * w2[t], 1e-12);
  }
}

TEST(AdjustWages, StaysWithinGroupRange) {
  std::vector<RawLaborCell> cells;
  for (int t = 0; t < 4; ++t) {
    cells.push_back(cell("FR", 1990 + t, Skill::medium, Gender::male, AgeGroup::middle, 8 + t, 30 + 5 * t));
    cells.push_back(cell("FR", 1990 + t, Skill::low, Gender::female, AgeGroup::young, 5 + t, 60 - 7 * t));
    cells.push_back(cell("FR", 1990 + t, Skill::medium, Gender::female, AgeGroup::old, 9.5, 12));
  }
  for (const auto& [key, w] : adjust_wages(cells)) {
    double lo = 1e300, hi = -1e300;
    for (const auto& c : cells) {
      if (c.year == key.year) {
        lo = std::min(lo, c.wage);
        hi = std::max(hi, c.wage);
      }
    }
    EXPECT_GE(w, lo);
    EXPECT_LE(w, hi);
  }
}

TEST(AdjustWages, MissingGroupIsAnError) {
  std::vector<RawLaborCell> cells = {
      cell("US", 2000, Skill::high, Gender::male, AgeGroup::middle, 10, 50),
      cell("US", 2000, Skill::high, Gender::female, AgeGroup::middle, 20, 50),
      cell("US", 2001, Skill::high, Gender::male, AgeGroup::middle, 10, 50),
  };
  EXPECT_THROW(adjust_wages(cells), ValidationError);
}

TEST(AdjustHours, BaseGroupAloneIsRawHours) {
  std::vector<RawLaborCell> cells = {
      cell("US", 2000, Skill::high, Gender::male, AgeGroup::middle, 10, 123),
  };
  EXPECT_DOUBLE_EQ(adjust_hours(cells).at({"US", 2000, SkillType::skilled}), 123.0);
}

TEST(AdjustHours, HalfWageGroupCountsHalf) {
  std::vector<RawLaborCell> cells = {
      cell("US", 2000, Skill::high, Gender::male, AgeGroup::middle, 20, 100),
      cell("US", 2000, Skill::high, Gender::female, AgeGroup::young, 10, 100),
  };
  EXPECT_DOUBLE_EQ(adjust_hours(cells).at({"US", 2000, SkillType::skilled}), 150.0);
}

TEST(AdjustHours, InvariantToWageRescaling) {
  std::vector<RawLaborCell> cells = {
      cell("US", 2000, Skill::medium, Gender::male, AgeGroup::middle, 12, 80),
      cell("US", 2000, Skill::low, Gender::female, AgeGroup::old, 7, 40),
      cell("US", 2001, Skill::medium, Gender::male, AgeGroup::middle, 13, 85),
      cell("US", 2001, Skill::low, Gender::female, AgeGroup::old, 7.5, 35),
  };
  auto scaled = cells;
  for (auto& c : scaled) c.wage *= 3.7;
  const auto a = adjust_hours(cells);
  const auto b = adjust_hours(scaled);
  for (const auto& [k, v] : a) EXPECT_NEAR(b.at(k), v, 1e-12 * v);
}

TEST(AdjustHours, EqualMeanWagesGiveRawTotals) {
  std::vector<RawLaborCell> cells = {
      cell("US", 2000, Skill::high, Gender::male, AgeGroup::middle, 10, 30),
      cell("US", 2000, Skill::high, Gender::female, AgeGroup::old, 12, 20),
      cell("US", 2001, Skill::high, Gender::male, AgeGroup::middle, 12, 35),
      cell("US", 2001, Skill::high, Gender::female, AgeGroup::old, 10, 25),
  };
  const auto h = adjust_hours(cells);
  EXPECT_NEAR(h.at({"US", 2000, SkillType::skilled}), 50.0, 1e-12);
  EXPECT_NEAR(h.at({"US", 2001, SkillType::skilled}), 60.0, 1e-12);
}

TEST(AdjustHours, MissingBaseGroupIsAnError) {
  std::vector<RawLaborCell> cells = {
      cell("US", 2000, Skill::high, Gender::female, AgeGroup::young, 10, 100),
  };
  EXPECT_THROW(adjust_hours(cells), ValidationError);
}

TEST(AdjustHours, SingleGroupCountriesAreIdentity) {
  std::vector<RawLaborCell> cells = {
      cell("SI", 2000, Skill::high, Gender::all, AgeGroup::all, 15, 70),
      cell("SI", 2000, Skill::medium, Gender::all, AgeGroup::all, 9, 200),
  };
  EXPECT_DOUBLE_EQ(adjust_hours(cells).at({"SI", 2000, SkillType::skilled}), 70.0);
  EXPECT_DOUBLE_EQ(adjust_wages(cells).at({"SI", 2000, SkillType::unskilled}), 9.0);
}

TEST(InterestRate, ClosedForms) {
  EXPECT_EQ(interest_rate(flat_cpi(1990, 2000), 1995), 0.04);
  CpiSeries growing{"US", {}};
  double level = 100.0;
  for (int y = 1990; y <= 2000; ++y) {
    growing.levels[y] = level;
    level *= 1.02;
  }
  EXPECT_NEAR(interest_rate(growing, 1995), 0.06, 1e-15);
}

TEST(InterestRate, HandComputedWindow) {
  const double levels[] = {100, 102, 105, 105, 103, 106, 110};
  CpiSeries s{"US", {}};
  for (int i = 0; i < 7; ++i) s.levels[2000 + i] = levels[i];
  // t = 2003 uses inflation 2001..2005.
  const double expected =
      0.04 + ((102.0 - 100) / 100 + (105.0 - 102) / 102 + 0.0 + (103.0 - 105) / 105 +
              (106.0 - 103) / 103) /
                 5.0;
  EXPECT_NEAR(interest_rate(s, 2003), expected, 1e-15);
  EXPECT_THROW(interest_rate(s, 2002), ValidationError);
}

TEST(RentalPrice, ConstantPriceFlatCpi) {
  const CpiSeries cpi = flat_cpi(1990, 2000);
  std::vector<InvestmentCell> inv;
  for (int y = 1993; y <= 1996; ++y) inv.push_back({"US", y, Asset::ict, 1.0, 0.1});
  EXPECT_NEAR(rental_price(inv, cpi, 1995), 0.14, 1e-15);
}

TEST(RentalPrice, ConstantLogDecline) {
  const CpiSeries cpi = flat_cpi(1990, 2000);
  const double g = -0.05;
  std::vector<InvestmentCell> inv = {{"US", 1993, Asset::ict, std::exp(-g), 0.0},
                                     {"US", 1994, Asset::ict, 1.0, 0.0},
                                     {"US", 1995, Asset::ict, std::exp(g), 0.0}};
  EXPECT_NEAR(rental_price(inv, cpi, 1995), 0.04 - g, 1e-15);
}

TEST(RentalPrice, MixedCase) {
  const CpiSeries cpi = flat_cpi(1990, 2000);
  std::vector<InvestmentCell> inv = {{"US", 1993, Asset::ict, 1.0, 0.12},
                                     {"US", 1994, Asset::ict, 0.9, 0.12},
                                     {"US", 1995, Asset::ict, 0.85, 0.12}};
  // 0.12 * 0.85 + 0.04 * 0.9 - ln(0.85 / 1.0) * 0.9 / 2
  EXPECT_NEAR(rental_price(inv, cpi, 1995), 0.211133518, 1e-9);
  EXPECT_THROW(rental_price(inv, cpi, 1994), ValidationError);
}

TEST(RentalPrice, LinearInDepreciation) {
  const CpiSeries cpi = flat_cpi(1990, 2000);
  auto series = [](double delta) {
    return std::vector<InvestmentCell>{{"US", 1993, Asset::ict, 1.1, delta},
                                       {"US", 1994, Asset::ict, 0.95, delta},
                                       {"US", 1995, Asset::ict, 0.8, delta}};
  };
  const double r0 = rental_price(series(0.0), cpi, 1995);
  const double r1 = rental_price(series(0.1), cpi, 1995);
  const double r2 = rental_price(series(0.2), cpi, 1995);
  EXPECT_NEAR(r2 - r1, r1 - r0, 1e-15);
  EXPECT_NEAR(r1 - r0, 0.1 * 0.8, 1e-15);
}
