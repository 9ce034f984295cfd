#include <benchmark/benchmark.h>

#include <cstdint>

#include "ces_skill/decomposition.hpp"
#include "ces_skill/estimation.hpp"
#include "ces_skill/instruments.hpp"
#include "ces_skill/model.hpp"
#include "ces_skill/shapley.hpp"
#include "ces_skill/synth.hpp"

using namespace ces_skill;

namespace {

const SimResult& sim() {
  static const SimResult s = [] {
    SimConfig cfg;
    cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
    return simulate_panel(cfg);
  }();
  return s;
}

const InstrumentSeries& instruments() {
  static const InstrumentSeries s = build_instruments(IndustryPanel(sim().industry), {});
  return s;
}

}  // namespace

static void BM_FocAndDemands(benchmark::State& state) {
  ProductionParams p;
  p.sigma = 0.6;
  p.rho = -0.3;
  const InputBundle x{2.0, 3.0, 1.2, 1.8};
  const TechLevels tech = tech_from_shares(p);
  for (auto _ : state) {
    const PriceBundle prices = foc_prices(p, x);
    benchmark::DoNotOptimize(factor_demands(p, tech, prices, {}, produce_output(p, x)));
  }
}
BENCHMARK(BM_FocAndDemands);

static void BM_Shapley(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  const auto f = [](std::uint32_t m) { return static_cast<double>(m * m % 97); };
  for (auto _ : state) benchmark::DoNotOptimize(shapley(f, K));
}
BENCHMARK(BM_Shapley)->DenseRange(2, 8, 2);

static void BM_SimulatePanel(benchmark::State& state) {
  SimConfig cfg;
  cfg.wedge_sd = {0.01, 0.01, 0.01, 0.01};
  for (auto _ : state) benchmark::DoNotOptimize(simulate_panel(cfg));
}
BENCHMARK(BM_SimulatePanel)->Unit(benchmark::kMillisecond);

static void BM_BuildInstruments(benchmark::State& state) {
  const IndustryPanel panel(sim().industry);
  for (auto _ : state) benchmark::DoNotOptimize(build_instruments(panel, {}));
}
BENCHMARK(BM_BuildInstruments)->Unit(benchmark::kMillisecond);

static void BM_MomentEvaluation(benchmark::State& state) {
  const MomentProblem problem(sim().records, instruments(), sim().trend_spec);
  const Eigen::VectorXd x = sim().truth.flatten();
  for (auto _ : state) benchmark::DoNotOptimize(problem.g(x));
}
BENCHMARK(BM_MomentEvaluation)->Unit(benchmark::kMicrosecond);

static void BM_GmmEstimate(benchmark::State& state) {
  GmmOptions o;
  if (state.range(0) == 1) o.starts = {{0.6, -0.3}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(gmm_estimate(sim().records, instruments(), sim().trend_spec, o));
  }
  state.SetLabel(state.range(0) == 1 ? "one start" : "default grid");
}
BENCHMARK(BM_GmmEstimate)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_EffectSeries(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(effect_series(sim().truth, sim().records));
}
BENCHMARK(BM_EffectSeries)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
