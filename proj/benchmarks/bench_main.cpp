#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stabconf/conformal.hpp"
#include "stabconf/ridge.hpp"
#include "stabconf/scores.hpp"
#include "stabconf/simlab.hpp"
#include "stabconf/trainer.hpp"

namespace {

using namespace stabconf;

simlab::GeneratorSpec bench_spec(int p) {
  simlab::GeneratorSpec spec;
  spec.p = p;
  spec.b = 1.0;
  spec.B = 1.0;
  spec.theta_star.assign(static_cast<std::size_t>(p), 0.3 / std::sqrt(p));
  spec.noise.family = simlab::NoiseSpec::Family::Uniform;
  spec.noise.a = 0.5;
  return spec;
}

void BM_UpperQuantilePlus(benchmark::State& state) {
  std::mt19937_64 eng(1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> values(static_cast<std::size_t>(state.range(0)));
  for (auto& v : values) v = unif(eng);
  for (auto _ : state) {
    const ScoreSet set{values};
    benchmark::DoNotOptimize(upper_quantile_plus(set, 0.1));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_UpperQuantilePlus)->Range(16, 16 << 10)->Complexity();

void BM_RidgeFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = static_cast<int>(state.range(1));
  const auto data = simlab::generate(bench_spec(p), n, 7);
  const ridge::Config config{1.0, ridge::Penalty::PerSample};
  for (auto _ : state) benchmark::DoNotOptimize(ridge::fit(data, config));
}
BENCHMARK(BM_RidgeFit)->Args({64, 2})->Args({256, 2})->Args({256, 16})->Args({1024, 16});

void BM_LooNaive(benchmark::State& state) {
  const auto data =
      simlab::generate(bench_spec(2), static_cast<std::size_t>(state.range(0)), 8);
  const ridge::Config config{1.0, ridge::Penalty::FixedTotal};
  for (auto _ : state)
    benchmark::DoNotOptimize(
        ridge::loo_models(data, config, ridge::LooMethod::Naive));
}
BENCHMARK(BM_LooNaive)->Range(16, 256);

void BM_LooFast(benchmark::State& state) {
  const auto data =
      simlab::generate(bench_spec(2), static_cast<std::size_t>(state.range(0)), 8);
  const ridge::Config config{1.0, ridge::Penalty::FixedTotal};
  for (auto _ : state)
    benchmark::DoNotOptimize(
        ridge::loo_models(data, config, ridge::LooMethod::Fast));
}
BENCHMARK(BM_LooFast)->Range(16, 256);

void BM_JackknifePlusRegion(benchmark::State& state) {
  const auto data =
      simlab::generate(bench_spec(2), static_cast<std::size_t>(state.range(0)), 9);
  const conformal::LooPredictor predictor(data, ridge_trainer({1.0}));
  const std::vector<double> x{0.2, -0.1};
  for (auto _ : state) benchmark::DoNotOptimize(predictor.plus_region(x, 0.1));
}
BENCHMARK(BM_JackknifePlusRegion)->Range(16, 256);

void BM_FullConformalGrid(benchmark::State& state) {
  const auto data = simlab::generate(bench_spec(2), 32, 10);
  const std::vector<double> x{0.2, -0.1};
  const auto grid = conformal::GridSpec::around(
      1.0, 0.5, static_cast<std::size_t>(state.range(0)));
  const auto trainer = ridge_trainer({1.0, ridge::Penalty::PerSample});
  for (auto _ : state)
    benchmark::DoNotOptimize(
        conformal::full_conformal(data, x, 0.1, trainer, grid));
}
BENCHMARK(BM_FullConformalGrid)->Arg(101)->Arg(501)->Arg(2001);

void BM_FullConformalExact(benchmark::State& state) {
  const auto data =
      simlab::generate(bench_spec(2), static_cast<std::size_t>(state.range(0)), 10);
  const std::vector<double> x{0.2, -0.1};
  const ridge::Config config{1.0, ridge::Penalty::PerSample};
  for (auto _ : state)
    benchmark::DoNotOptimize(
        conformal::full_conformal_ridge_exact(data, x, 0.1, config));
}
BENCHMARK(BM_FullConformalExact)->Range(16, 256);

void BM_EstimatePeJackknifePlus(benchmark::State& state) {
  const auto spec = bench_spec(2);
  const auto data = simlab::generate(spec, 40, 11);
  const auto predictor =
      std::make_shared<conformal::LooPredictor>(data, ridge_trainer({1.0}));
  const simlab::CoverageFn covers = [predictor](const std::vector<double>& x,
                                                double y) {
    return predictor->plus_region(x, 0.1).contains(y);
  };
  for (auto _ : state)
    benchmark::DoNotOptimize(simlab::estimate_pe(covers, spec, 1000, 12));
}
BENCHMARK(BM_EstimatePeJackknifePlus);

}  // namespace

BENCHMARK_MAIN();
