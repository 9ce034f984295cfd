#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "ces_skill/cli.hpp"
#include "ces_skill/csv.hpp"

namespace fs = std::filesystem;
using ces_skill::cli::run;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ces_skill_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int call(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run(args, out_, err_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  int simulate_into(const std::string& sub, const std::vector<std::string>& extra = {}) {
    std::vector<std::string> args = {"simulate", "--seed", "7", "--out", path(sub)};
    args.insert(args.end(), extra.begin(), extra.end());
    return call(args);
  }
  std::map<std::string, double> read_column(const fs::path& p, const std::string& key,
                                            const std::string& value) {
    std::ifstream in(p);
    const auto t = ces_skill::csv::read(in, p.string());
    std::map<std::string, double> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      out[t.rows[r].fields[t.column(key)]] = std::stod(t.rows[r].fields[t.column(value)]);
    }
    return out;
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(Cli, SimulateIsByteReproducible) {
  ASSERT_EQ(simulate_into("a"), 0) << err_.str();
  ASSERT_EQ(simulate_into("b"), 0) << err_.str();
  for (const auto* f : {"panel.csv", "industry.csv", "truth.csv", "truth_paths.csv", "trends.cfg"}) {
    const std::string a = slurp(dir_ / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
    EXPECT_EQ(a.rfind("# config-fingerprint=", 0), 0u) << f;
  }
}

TEST_F(Cli, FingerprintDependsOnConfiguration) {
  ASSERT_EQ(simulate_into("a"), 0);
  ASSERT_EQ(simulate_into("b", {"--sigma", "0.5"}), 0);
  const auto first_line = [&](const std::string& sub) {
    std::ifstream in(dir_ / sub / "panel.csv");
    std::string line;
    std::getline(in, line);
    return line;
  };
  EXPECT_NE(first_line("a"), first_line("b"));
  EXPECT_EQ(ces_skill::cli::fingerprint("x").size(), 16u);
  EXPECT_EQ(ces_skill::cli::fingerprint(""), "cbf29ce484222325");
}

TEST_F(Cli, RefusesToOverwriteWithoutForce) {
  ASSERT_EQ(simulate_into("a"), 0);
  const std::string before = slurp(dir_ / "a" / "panel.csv");
  EXPECT_EQ(simulate_into("a", {"--sigma", "0.5"}), ces_skill::cli::kExitValidation);
  EXPECT_EQ(slurp(dir_ / "a" / "panel.csv"), before);
  EXPECT_EQ(simulate_into("a", {"--sigma", "0.5", "--force"}), 0) << err_.str();
  EXPECT_NE(slurp(dir_ / "a" / "panel.csv"), before);
}

TEST_F(Cli, EstimateDecomposeElasticitiesPipeline) {
  ASSERT_EQ(simulate_into("sim"), 0);
  const std::string sim = path("sim");
  ASSERT_EQ(call({"estimate", "--panel", sim + "/panel.csv", "--industry", sim + "/industry.csv",
                  "--trend-config", sim + "/trends.cfg", "--out", path("est")}),
            0)
      << err_.str();
  const auto est = read_column(dir_ / "est" / "estimates.csv", "parameter", "estimate");
  const auto truth = read_column(dir_ / "sim" / "truth.csv", "parameter", "value");
  for (const auto& [name, value] : est) {
    ASSERT_TRUE(truth.count(name)) << name;
    EXPECT_NEAR(value, truth.at(name), 1e-6) << name;
  }
  EXPECT_NE(slurp(dir_ / "est" / "diagnostics.txt").find("converged=true"), std::string::npos);

  ASSERT_EQ(call({"decompose", "--panel", sim + "/panel.csv", "--estimates",
                  path("est") + "/estimates.csv", "--window", "1980:2015", "--base-country",
                  "C01", "--out", path("dec")}),
            0)
      << err_.str();
  std::ifstream in(dir_ / "dec" / "decomposition.csv");
  const auto t = ces_skill::csv::read(in, "decomposition.csv");
  std::map<std::string, double> sums, residuals;
  for (const auto& row : t.rows) {
    sums[row.fields[t.column("country")]] += std::stod(row.fields[t.column("contribution")]);
    residuals[row.fields[t.column("country")]] = std::stod(row.fields[t.column("residual")]);
  }
  EXPECT_EQ(sums.size(), 14u);
  std::map<std::string, double> actual;
  {
    std::ifstream pin(dir_ / "sim" / "panel.csv");
    const auto p = ces_skill::csv::read(pin, "panel.csv");
    for (const auto& row : p.rows) {
      const int year = std::stoi(row.fields[p.column("year")]);
      const double lp = std::log(std::stod(row.fields[p.column("w_h")]) / std::stod(row.fields[p.column("w_u")]));
      if (year == 1980) actual[row.fields[p.column("country")]] -= lp;
      if (year == 2015) actual[row.fields[p.column("country")]] += lp;
    }
  }
  for (const auto& [c, s] : sums) {
    EXPECT_NEAR(s + residuals[c], actual[c], 1e-10) << c;
    EXPECT_NEAR(residuals[c], 0.0, 1e-8) << c;
  }
  for (const auto* f : {"labor_demand.csv", "education.csv", "series.csv", "cross_country.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "dec" / f)) << f;
  }

  ASSERT_EQ(call({"elasticities", "--panel", sim + "/panel.csv", "--estimates",
                  path("est") + "/estimates.csv", "--out", path("ela")}),
            0)
      << err_.str();
  const auto ela = read_column(dir_ / "ela" / "elasticities.csv", "pair", "closed_form");
  EXPECT_NEAR(ela.at("k_i:l_h"), 1.0 / 1.3, 1e-6);
  EXPECT_NEAR(ela.at("k_i:l_u"), 2.5, 1e-6);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(call({"frobnicate"}), ces_skill::cli::kExitValidation);
  EXPECT_EQ(call({"estimate", "--panel", path("missing.csv")}), ces_skill::cli::kExitValidation);
  EXPECT_EQ(call({"--help"}), 0);
  {
    std::ofstream bad(dir_ / "panel.csv");
    bad << "country,year,w_h\nUS,2000,abc\n";
  }
  EXPECT_EQ(call({"validate", "--panel", path("panel.csv")}), ces_skill::cli::kExitValidation);
  EXPECT_EQ(call({"simulate", "--sigma", "1.5", "--out", path("s")}),
            ces_skill::cli::kExitValidation);
}

TEST_F(Cli, InstrumentsCommandWritesConditionNumber) {
  ASSERT_EQ(simulate_into("sim"), 0);
  ASSERT_EQ(call({"instruments", "--industry", path("sim") + "/industry.csv", "--out",
                  path("inst")}),
            0)
      << err_.str();
  EXPECT_NE(slurp(dir_ / "inst" / "instruments.csv").find("# condition_number="),
            std::string::npos);
}
