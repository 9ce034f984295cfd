#include "ces_skill/cli.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <utility>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "ces_skill/csv.hpp"
#include "ces_skill/decomposition.hpp"
#include "ces_skill/error.hpp"
#include "ces_skill/estimation.hpp"
#include "ces_skill/instruments.hpp"
#include "ces_skill/model.hpp"
#include "ces_skill/panel.hpp"
#include "ces_skill/synth.hpp"

namespace fs = std::filesystem;

namespace ces_skill::cli {

std::string fingerprint(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Ordered key=value list describing everything an output depends on. Input
// files enter by content hash, so moving them does not change the result.
class Canonical {
 public:
  explicit Canonical(std::string subcommand) { add("subcommand", std::move(subcommand)); }
  void add(const std::string& key, const std::string& value) {
    text_ += key + "=" + value + "\n";
  }
  void add(const std::string& key, double v) { add(key, csv::format_double(v)); }
  void add_int(const std::string& key, long long v) { add(key, std::to_string(v)); }
  void add_file(const std::string& key, const std::optional<fs::path>& p) {
    if (p) add(key + ".fnv", fingerprint(slurp(*p)));
  }
  std::string line() const { return "config-fingerprint=" + fingerprint(text_); }

 private:
  std::string text_;
};

// Files are staged in memory and written only after every target has been
// checked, so a refused run leaves the directory untouched.
class Outputs {
 public:
  Outputs(fs::path dir, bool force, std::string fingerprint_line)
      : dir_(std::move(dir)), force_(force), line_(std::move(fingerprint_line)) {}

  std::ostream& file(const std::string& name) {
    auto& s = files_.emplace_back(name, std::make_unique<std::ostringstream>()).second;
    *s << "# " << line_ << '\n';
    return *s;
  }

  void commit() const {
    if (!force_) {
      for (const auto& [name, _] : files_) {
        if (fs::exists(dir_ / name)) {
          throw ValidationError(fmt::format(
              "{} exists; pass --force to overwrite", (dir_ / name).string()));
        }
      }
    }
    fs::create_directories(dir_);
    for (const auto& [name, s] : files_) {
      std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
      if (!out) throw ValidationError("cannot write " + (dir_ / name).string());
      out << s->str();
    }
  }

 private:
  fs::path dir_;
  bool force_;
  std::string line_;
  std::vector<std::pair<std::string, std::unique_ptr<std::ostringstream>>> files_;
};

std::string fmt_opt(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : std::string("undefined");
}

struct InstrumentFlags {
  std::string kind = "shift_share";
  std::optional<int> horizon;
  std::vector<int> lags = {2, 3, 4};

  void attach(CLI::App* sub) {
    sub->add_option("--instrument", kind, "shift_share or lagged")
        ->check(CLI::IsMember({"shift_share", "lagged"}));
    sub->add_option("--horizon", horizon, "difference horizon in years")
        ->check(CLI::PositiveNumber);
    sub->add_option("--lags", lags, "lag lengths for lagged instruments")
        ->check(CLI::PositiveNumber);
  }
  InstrumentOptions resolve() const {
    InstrumentOptions o = InstrumentOptions::defaults_for(parse_instrument_kind(kind));
    if (horizon) o.horizon = *horizon;
    o.lags = lags;
    return o;
  }
  void describe(Canonical& c) const {
    const InstrumentOptions o = resolve();
    c.add("instrument", std::string(to_string(o.kind)));
    c.add_int("horizon", o.horizon);
    if (o.kind == InstrumentKind::lagged) {
      std::string l;
      for (int v : o.lags) l += std::to_string(v) + ",";
      c.add("lags", l);
    }
  }
};

struct Common {
  fs::path out_dir;
  bool force = false;
  int verbosity = 0;
};

void attach_out(CLI::App* sub, Common& common, bool required = true) {
  auto* o = sub->add_option("--out", common.out_dir, "output directory");
  if (required) o->required();
  sub->add_flag("--force", common.force, "overwrite existing outputs");
}

void note(const Common& c, std::ostream& err, const std::string& msg) {
  if (c.verbosity > 0) err << msg << '\n';
}

std::vector<CountryYearRecord> read_panel(const fs::path& p) {
  PanelFiles files;
  files.panel = p;
  return load_panel(files).records;
}

IndustryPanel read_industry(const fs::path& p) {
  PanelFiles files;
  files.industry = p;
  return IndustryPanel(load_panel(files).industry);
}

ThetaVector read_theta(const fs::path& p, const std::vector<CountryYearRecord>& panel) {
  const csv::Table t = csv::read_file(p);
  const std::size_t name_col = t.column("parameter");
  std::size_t value_col = 0;
  const auto has = [&](const char* n) {
    return std::find(t.header.begin(), t.header.end(), n) != t.header.end();
  };
  value_col = has("estimate") ? t.column("estimate") : t.column("value");
  std::vector<std::pair<std::string, double>> values;
  for (const auto& row : t.rows) {
    const std::string& name = csv::field(t, row, name_col);
    if (name == "alpha") continue;
    values.emplace_back(name, csv::parse_double(t, row, value_col));
  }
  return theta_from_named(values, panel_origins(panel));
}

std::map<std::string, double> read_se(const fs::path& p) {
  const csv::Table t = csv::read_file(p);
  std::map<std::string, double> out;
  const auto it = std::find(t.header.begin(), t.header.end(), "se");
  if (it == t.header.end()) return out;
  const std::size_t name_col = t.column("parameter");
  const std::size_t se_col = t.column("se");
  for (const auto& row : t.rows) {
    out[csv::field(t, row, name_col)] = csv::parse_double(t, row, se_col);
  }
  return out;
}

std::optional<Window> parse_window(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("missing ':'");
    std::size_t used = 0;
    Window w;
    const std::string a = text.substr(0, colon);
    const std::string b = text.substr(colon + 1);
    w.from_year = std::stoi(a, &used);
    if (used != a.size()) throw std::invalid_argument("trailing text");
    w.to_year = std::stoi(b, &used);
    if (used != b.size()) throw std::invalid_argument("trailing text");
    return w;
  } catch (const std::exception&) {
    throw ValidationError("--window expects FROM:TO, got " + text);
  }
}

Window full_window(const std::vector<CountryYearRecord>& rows) {
  return {rows.front().year, rows.back().year};
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  PanelFiles files;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  const auto& f = a.files;
  if (!f.panel && !f.industry && !f.labor && !f.investment && !f.cpi) {
    throw ValidationError("validate needs at least one input file");
  }
  bool ok = true;
  for (const FileReport& rep : validate_files(f)) {
    fmt::print(out, "{}: {} rows, {}\n", rep.file, rep.rows,
               rep.ok() ? "ok" : fmt::format("{} issue(s)", rep.issues.size()));
    for (const auto& [country, range] : rep.year_ranges) {
      fmt::print(out, "  {} {}-{}\n", country, range.first, range.second);
    }
    for (const auto& issue : rep.issues) fmt::print(out, "  issue: {}\n", issue);
    ok = ok && rep.ok();
  }
  return ok ? kExitOk : kExitValidation;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common common;
  SimConfig cfg;
  double wedge_sd = 0.0;
  std::string wedge_process = "iid_level";
};

int cmd_simulate(SimulateArgs& a, std::ostream& err) {
  SimConfig cfg = a.cfg;
  cfg.wedge_sd = {a.wedge_sd, a.wedge_sd, a.wedge_sd, a.wedge_sd};
  cfg.wedge_process =
      a.wedge_process == "random_walk" ? WedgeProcess::random_walk : WedgeProcess::iid_level;
  cfg.validate();

  Canonical c("simulate");
  c.add("seed", std::to_string(cfg.seed));
  c.add_int("countries", cfg.countries);
  c.add_int("industries", cfg.industries);
  c.add_int("first_year", cfg.first_year);
  c.add_int("last_year", cfg.last_year);
  c.add("sigma", cfg.sigma);
  c.add("rho", cfg.rho);
  c.add("wedge_sd", a.wedge_sd);
  c.add("wedge_process", a.wedge_process);

  note(a.common, err, "simulating panel");
  const SimResult sim = simulate_panel(cfg);
  Outputs outs(a.common.out_dir, a.common.force, c.line());
  write_records(outs.file("panel.csv"), sim.records);
  write_industry(outs.file("industry.csv"), sim.industry);
  write_truth(outs.file("truth.csv"), sim, cfg.alpha);
  write_truth_paths(outs.file("truth_paths.csv"), sim);
  sim.trend_spec.write(outs.file("trends.cfg"));
  outs.commit();
  return kExitOk;
}

// ------------------------------------------------------------- instruments

struct InstrumentsArgs {
  Common common;
  fs::path industry;
  InstrumentFlags inst;
};

int cmd_instruments(const InstrumentsArgs& a) {
  Canonical c("instruments");
  c.add_file("industry", a.industry);
  a.inst.describe(c);
  const InstrumentSeries series = build_instruments(read_industry(a.industry), a.inst.resolve());
  Outputs outs(a.common.out_dir, a.common.force, c.line());
  auto& f = outs.file("instruments.csv");
  const double cond = condition_number(instrument_matrix(series));
  f << "# condition_number=" << csv::format_double(cond) << '\n';
  write_instruments(f, series);
  outs.commit();
  return kExitOk;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  Common common;
  fs::path panel;
  fs::path industry;
  std::optional<fs::path> trend_config;
  InstrumentFlags inst;
  std::string optimizer = "lm";
};

int cmd_estimate(const EstimateArgs& a, std::ostream& err) {
  Canonical c("estimate");
  c.add_file("panel", a.panel);
  c.add_file("industry", a.industry);
  c.add_file("trend_config", a.trend_config);
  a.inst.describe(c);
  c.add("optimizer", a.optimizer);

  const auto panel = read_panel(a.panel);
  const TrendSpec spec = a.trend_config ? TrendSpec::read_file(*a.trend_config) : TrendSpec{};
  const InstrumentSeries inst = build_instruments(read_industry(a.industry), a.inst.resolve());
  GmmOptions opts;
  opts.optimizer =
      a.optimizer == "bfgs" ? OptimizerKind::bfgs : OptimizerKind::levenberg_marquardt;
  note(a.common, err, fmt::format("estimating with {} starts", opts.starts.size()));
  const GmmResult r = gmm_estimate(panel, inst, spec, opts);

  Outputs outs(a.common.out_dir, a.common.force, c.line());
  {
    csv::Writer w(outs.file("estimates.csv"));
    w.row({"parameter", "estimate", "se"});
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      w.row({r.names[i], csv::format_double(r.x(static_cast<Eigen::Index>(i))),
             csv::format_double(r.se(i))});
    }
  }
  {
    auto& d = outs.file("diagnostics.txt");
    const auto kv = [&](const std::string& k, const std::string& v) { d << k << '=' << v << '\n'; };
    kv("objective", csv::format_double(r.objective));
    kv("J", csv::format_double(r.J));
    kv("J_df", std::to_string(r.J_df));
    kv("J_pvalue", fmt_opt(r.J_pvalue));
    kv("converged", r.report.converged ? "true" : "false");
    kv("message", r.report.message);
    kv("iterations", std::to_string(r.report.iterations));
    kv("evaluations", std::to_string(r.report.evaluations));
    kv("gradient_norm", csv::format_double(r.report.gradient_norm));
    kv("start_index", std::to_string(r.start_index));
    kv("observations", std::to_string(r.observations));
    kv("clusters", std::to_string(r.clusters));
    kv("moments", std::to_string(r.moments));
    kv("parameters", std::to_string(r.names.size()));
    kv("two_step", r.two_step ? "true" : "false");
    kv("weight_ridge", r.weight_ridge ? "true" : "false");
    kv("few_clusters", r.few_clusters ? "true" : "false");
    kv("instrument_condition", csv::format_double(condition_number(instrument_matrix(inst))));
    for (const auto& wmsg : r.warnings) kv("warning", wmsg);
  }
  outs.commit();
  if (!r.report.converged) {
    err << "estimation did not converge: " << r.report.message << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

// --------------------------------------------------------------- decompose

struct DecomposeArgs {
  Common common;
  fs::path panel;
  fs::path estimates;
  std::string window;
  std::string base_country;
};

int cmd_decompose(const DecomposeArgs& a) {
  Canonical c("decompose");
  c.add_file("panel", a.panel);
  c.add_file("estimates", a.estimates);
  c.add("window", a.window);
  c.add("base_country", a.base_country);

  const auto panel = read_panel(a.panel);
  const ThetaVector theta = read_theta(a.estimates, panel);
  const std::optional<Window> fixed = parse_window(a.window);
  const auto grouped = by_country(panel);

  Outputs outs(a.common.out_dir, a.common.force, c.line());
  csv::Writer dec(outs.file("decomposition.csv"));
  csv::Writer dem(outs.file("labor_demand.csv"));
  csv::Writer edu(outs.file("education.csv"));
  dec.row({"country", "factor", "contribution", "effect_group", "residual"});
  dem.row({"country", "factor", "contribution", "group", "residual"});
  edu.row({"country", "from_year", "to_year", "total", "csc", "rlq", "ratio"});
  for (const auto& [country, rows] : grouped) {
    const Window w = fixed.value_or(full_window(rows));
    const DecompositionReport rep = decompose_skill_premium(country, theta, panel, w);
    for (const auto& f : rep.factors) {
      dec.row({country, f.factor, csv::format_double(f.contribution), f.effect,
               csv::format_double(rep.residual)});
    }
    const LaborDemandReport ld = decompose_labor_demand(country, theta, panel, w);
    for (const auto& f : ld.factors) {
      dem.row({country, f.factor, csv::format_double(f.contribution), f.effect,
               csv::format_double(ld.residual)});
    }
    const EducationEffect e = education_effect(country, theta, panel, w);
    edu.row({country, std::to_string(w.from_year), std::to_string(w.to_year),
             csv::format_double(e.total), csv::format_double(e.csc), csv::format_double(e.rlq),
             fmt_opt(e.ratio)});
  }

  auto& series_file = outs.file("series.csv");
  series_file << "# observed_only holds technology at the sample mean of its logs\n";
  csv::Writer ser(series_file);
  ser.row({"country", "year", "csc", "rlq", "rlat", "residual", "actual", "observed_only"});
  for (const auto& r : effect_series(theta, panel)) {
    ser.row({r.country, std::to_string(r.year), csv::format_double(r.csc),
             csv::format_double(r.rlq), csv::format_double(r.rlat),
             csv::format_double(r.residual), csv::format_double(r.actual),
             csv::format_double(r.observed_only)});
  }

  if (!a.base_country.empty()) {
    const auto base_it = grouped.find(a.base_country);
    if (base_it == grouped.end()) {
      throw ValidationError("base country " + a.base_country + " not in the panel");
    }
    csv::Writer cc(outs.file("cross_country.csv"));
    cc.row({"base", "other", "from_year", "to_year", "factor", "difference", "share"});
    for (const auto& [other, rows] : grouped) {
      if (other == a.base_country) continue;
      Window w;
      if (fixed) {
        w = *fixed;
      } else {
        w.from_year = std::max(base_it->second.front().year, rows.front().year);
        w.to_year = std::min(base_it->second.back().year, rows.back().year);
      }
      const CrossCountryReport rep = decompose_cross_country(a.base_country, other, theta, panel, w);
      const auto emit = [&](const std::string& factor, double d, const std::optional<double>& s) {
        cc.row({a.base_country, other, std::to_string(w.from_year), std::to_string(w.to_year),
                factor, csv::format_double(d), s ? csv::format_double(*s) : std::string()});
      };
      emit("data", rep.data_difference, std::nullopt);
      emit("model", rep.model_difference, std::nullopt);
      emit("residual", rep.residual_difference, std::nullopt);
      for (const auto& row : rep.rows) emit(row.factor, row.difference, row.share);
    }
  }
  outs.commit();
  return kExitOk;
}

// ------------------------------------------------------------ elasticities

struct ElasticitiesArgs {
  Common common;
  fs::path panel;
  fs::path estimates;
  double alpha = 1.0 / 3.0;
};

struct MorishimaPoint {
  double k_l = 0.0;
  double k_u = 0.0;
};

// Numerical Morishima elasticities at the geometric-mean prices of the panel,
// with technology at the mean of its logs and no wedges.
MorishimaPoint morishima_at_means(const ThetaVector& theta,
                                  const std::vector<CountryYearRecord>& panel, double alpha) {
  double lw_h = 0, lw_u = 0, lr_i = 0, lr_o = 0, hu = 0, ih = 0;
  for (const auto& r : panel) {
    lw_h += std::log(r.w_h);
    lw_u += std::log(r.w_u);
    lr_i += std::log(r.r_i);
    lr_o += std::log(r.r_o);
    const PremiumFactors f = premium_factors(theta, r);
    hu += f.ln_ah_au;
    ih += f.ln_ai_ah;
  }
  const double n = static_cast<double>(panel.size());
  ProductionParams p;
  p.alpha = alpha;
  p.sigma = theta.sigma;
  p.rho = theta.rho;
  PriceBundle prices{std::exp(lw_h / n), std::exp(lw_u / n), std::exp(lr_i / n),
                     std::exp(lr_o / n)};
  const TechLevels tech{std::exp(ih / n), 1.0, std::exp(-hu / n)};
  return {morishima(Input::k_i, Input::l_h, p, tech, prices, {}),
          morishima(Input::k_i, Input::l_u, p, tech, prices, {})};
}

Elasticities elasticities_with_se(const ThetaVector& theta, const fs::path& estimates) {
  const auto se = read_se(estimates);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  if (se.count("sigma")) cov(0, 0) = se.at("sigma") * se.at("sigma");
  if (se.count("rho")) cov(1, 1) = se.at("rho") * se.at("rho");
  return to_elasticities(theta.sigma, theta.rho, cov);
}

int cmd_elasticities(const ElasticitiesArgs& a) {
  Canonical c("elasticities");
  c.add_file("panel", a.panel);
  c.add_file("estimates", a.estimates);
  c.add("alpha", a.alpha);
  const auto panel = read_panel(a.panel);
  const ThetaVector theta = read_theta(a.estimates, panel);
  const Elasticities e = elasticities_with_se(theta, a.estimates);
  const MorishimaPoint m = morishima_at_means(theta, panel, a.alpha);

  Outputs outs(a.common.out_dir, a.common.force, c.line());
  csv::Writer w(outs.file("elasticities.csv"));
  w.row({"pair", "closed_form", "se", "morishima_at_means"});
  w.row({"k_i:l_h", csv::format_double(e.k_l.value), csv::format_double(e.k_l.se),
         csv::format_double(m.k_l)});
  w.row({"k_i:l_u", csv::format_double(e.k_u.value), csv::format_double(e.k_u.se),
         csv::format_double(m.k_u)});
  outs.commit();
  return kExitOk;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  Common common;
  fs::path panel;
  fs::path estimates;
  int horizon = 5;
};

int cmd_report(const ReportArgs& a) {
  Canonical c("report");
  c.add_file("panel", a.panel);
  c.add_file("estimates", a.estimates);
  c.add_int("horizon", a.horizon);
  const auto panel = read_panel(a.panel);
  const ThetaVector theta = read_theta(a.estimates, panel);
  const auto se = read_se(a.estimates);
  const Elasticities e = elasticities_with_se(theta, a.estimates);

  Outputs outs(a.common.out_dir, a.common.force, c.line());
  auto& o = outs.file("report.txt");
  const auto se_of = [&](const char* n) {
    return se.count(n) ? fmt::format("{:.4f}", se.at(n)) : std::string("-");
  };
  fmt::print(o, "substitution parameters\n");
  fmt::print(o, "  sigma {:.4f} (se {})\n", theta.sigma, se_of("sigma"));
  fmt::print(o, "  rho   {:.4f} (se {})\n", theta.rho, se_of("rho"));
  fmt::print(o, "  capital-skill complementarity: {}\n", theta.sigma > theta.rho ? "yes" : "no");
  fmt::print(o, "\nelasticities\n");
  fmt::print(o, "  k_i vs l_h 1/(1-rho)   {:.4f} (se {:.4f})\n", e.k_l.value, e.k_l.se);
  fmt::print(o, "  k_i vs l_u 1/(1-sigma) {:.4f} (se {:.4f})\n", e.k_u.value, e.k_u.se);

  fmt::print(o, "\nskill premium change, full sample per country\n");
  fmt::print(o, "  {:<8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n", "country", "actual", "csc",
             "rlq", "rlat", "wedge", "edu_ratio");
  double ratio_sum = 0.0;
  int ratio_n = 0;
  for (const auto& [country, rows] : by_country(panel)) {
    const Window w = full_window(rows);
    const DecompositionReport rep = decompose_skill_premium(country, theta, panel, w);
    const EducationEffect ed = education_effect(country, theta, panel, w);
    if (ed.ratio) {
      ratio_sum += *ed.ratio;
      ++ratio_n;
    }
    fmt::print(o, "  {:<8} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f} {:>9}\n", country,
               rep.actual, rep.csc, rep.rlq, rep.rlat, rep.residual,
               ed.ratio ? fmt::format("{:.3f}", *ed.ratio) : std::string("undefined"));
  }
  if (ratio_n > 0) {
    fmt::print(o, "  mean education amplification ratio {:.3f}\n", ratio_sum / ratio_n);
  }

  fmt::print(o, "\ntrend order fit (rmse of implied technology paths, horizon {})\n", a.horizon);
  for (const auto& t : trend_order_rmse(panel, theta.sigma, theta.rho, a.horizon)) {
    fmt::print(o, "  {:<8} order {} rmse {:.6f}\n", t.country, t.order, t.rmse);
  }
  outs.commit();
  return kExitOk;
}

// -------------------------------------------------------------- montecarlo

struct MonteCarloArgs {
  Common common;
  SimConfig cfg;
  std::size_t replications = 20;
  double wedge_sd = 0.01;
  std::string wedge_process = "iid_level";
  InstrumentFlags inst;
};

int cmd_montecarlo(const MonteCarloArgs& a, std::ostream& err) {
  SimConfig cfg = a.cfg;
  cfg.wedge_sd = {a.wedge_sd, a.wedge_sd, a.wedge_sd, a.wedge_sd};
  cfg.wedge_process =
      a.wedge_process == "random_walk" ? WedgeProcess::random_walk : WedgeProcess::iid_level;
  Canonical c("montecarlo");
  c.add("seed", std::to_string(cfg.seed));
  c.add_int("replications", static_cast<long long>(a.replications));
  c.add("wedge_sd", a.wedge_sd);
  c.add("wedge_process", a.wedge_process);
  a.inst.describe(c);
  MonteCarloOptions opts;
  opts.instruments = a.inst.resolve();
  note(a.common, err, fmt::format("running {} replications", a.replications));
  const MonteCarloSummary s = monte_carlo(cfg, a.replications, opts);
  Outputs outs(a.common.out_dir, a.common.force, c.line());
  write_monte_carlo(outs.file("montecarlo.csv"), s);
  {
    csv::Writer w(outs.file("replications.csv"));
    w.row({"index", "seed", "ok", "converged", "sigma", "rho", "se_sigma", "se_rho",
           "se_sigma_unclustered", "se_rho_unclustered", "error"});
    for (const auto& r : s.runs) {
      w.row({std::to_string(r.index), std::to_string(r.seed), r.ok ? "1" : "0",
             r.converged ? "1" : "0", csv::format_double(r.sigma), csv::format_double(r.rho),
             csv::format_double(r.se_sigma), csv::format_double(r.se_rho),
             csv::format_double(r.se_sigma_unclustered), csv::format_double(r.se_rho_unclustered),
             r.error});
    }
  }
  outs.commit();
  return kExitOk;
}

void attach_sim(CLI::App* sub, SimConfig& cfg, double& wedge_sd, std::string& process) {
  sub->add_option("--seed", cfg.seed, "random seed");
  sub->add_option("--countries", cfg.countries)->check(CLI::PositiveNumber);
  sub->add_option("--industries", cfg.industries)->check(CLI::PositiveNumber);
  sub->add_option("--first-year", cfg.first_year);
  sub->add_option("--last-year", cfg.last_year);
  sub->add_option("--sigma", cfg.sigma);
  sub->add_option("--rho", cfg.rho);
  sub->add_option("--wedge-sd", wedge_sd, "wedge shock sd on every market")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--wedge-process", process)
      ->check(CLI::IsMember({"iid_level", "random_walk"}));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimation and decomposition of skill premia under nested CES production",
               "ces_skill"};
  app.require_subcommand(1, 1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "progress messages on stderr");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "per-file invariant report");
  validate->add_option("--panel", va.files.panel)->check(CLI::ExistingFile);
  validate->add_option("--industry", va.files.industry)->check(CLI::ExistingFile);
  validate->add_option("--labor", va.files.labor)->check(CLI::ExistingFile);
  validate->add_option("--investment", va.files.investment)->check(CLI::ExistingFile);
  validate->add_option("--cpi", va.files.cpi)->check(CLI::ExistingFile);

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "synthetic panel with known parameters");
  attach_sim(simulate, sa.cfg, sa.wedge_sd, sa.wedge_process);
  attach_out(simulate, sa.common);

  InstrumentsArgs ia;
  auto* instruments = app.add_subcommand("instruments", "build instruments.csv");
  instruments->add_option("--industry", ia.industry)->required()->check(CLI::ExistingFile);
  ia.inst.attach(instruments);
  attach_out(instruments, ia.common);

  EstimateArgs ea;
  auto* estimate = app.add_subcommand("estimate", "GMM estimation");
  estimate->add_option("--panel", ea.panel)->required()->check(CLI::ExistingFile);
  estimate->add_option("--industry", ea.industry)->required()->check(CLI::ExistingFile);
  estimate->add_option("--trend-config", ea.trend_config)->check(CLI::ExistingFile);
  estimate->add_option("--optimizer", ea.optimizer)->check(CLI::IsMember({"lm", "bfgs"}));
  ea.inst.attach(estimate);
  attach_out(estimate, ea.common);

  DecomposeArgs da;
  auto* decompose = app.add_subcommand("decompose", "Shapley decompositions");
  decompose->add_option("--panel", da.panel)->required()->check(CLI::ExistingFile);
  decompose->add_option("--estimates", da.estimates)->required()->check(CLI::ExistingFile);
  decompose->add_option("--window", da.window, "FROM:TO, default each country's full range");
  decompose->add_option("--base-country", da.base_country, "reference for cross_country.csv");
  attach_out(decompose, da.common);

  ElasticitiesArgs la;
  auto* elasticities = app.add_subcommand("elasticities", "Morishima elasticities");
  elasticities->add_option("--panel", la.panel)->required()->check(CLI::ExistingFile);
  elasticities->add_option("--estimates", la.estimates)->required()->check(CLI::ExistingFile);
  elasticities->add_option("--alpha", la.alpha, "non-ICT capital share");
  attach_out(elasticities, la.common);

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "plain-text summary");
  report->add_option("--panel", ra.panel)->required()->check(CLI::ExistingFile);
  report->add_option("--estimates", ra.estimates)->required()->check(CLI::ExistingFile);
  report->add_option("--horizon", ra.horizon)->check(CLI::PositiveNumber);
  attach_out(report, ra.common);

  MonteCarloArgs ma;
  auto* mc = app.add_subcommand("montecarlo", "bias and coverage of the estimator");
  attach_sim(mc, ma.cfg, ma.wedge_sd, ma.wedge_process);
  mc->add_option("--replications", ma.replications)->check(CLI::PositiveNumber);
  ma.inst.attach(mc);
  attach_out(mc, ma.common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  for (Common* cm : {&sa.common, &ia.common, &ea.common, &da.common, &la.common, &ra.common,
                     &ma.common}) {
    cm->verbosity = verbosity;
  }

  try {
    if (*validate) return cmd_validate(va, out);
    if (*simulate) return cmd_simulate(sa, err);
    if (*instruments) return cmd_instruments(ia);
    if (*estimate) return cmd_estimate(ea, err);
    if (*decompose) return cmd_decompose(da);
    if (*elasticities) return cmd_elasticities(la);
    if (*report) return cmd_report(ra);
    if (*mc) return cmd_montecarlo(ma, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitValidation;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace ces_skill::cli
