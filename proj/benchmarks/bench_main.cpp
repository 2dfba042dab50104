#include <benchmark/benchmark.h>

#include "kkr/diagnostics.hpp"
#include "kkr/dynamics.hpp"
#include "kkr/edmd.hpp"
#include "kkr/kernel.hpp"
#include "kkr/kkr_model.hpp"
#include "kkr/spectra.hpp"

namespace {

constexpr double kDt = 1.0 / 14.0;
constexpr std::size_t kHorizon = 14;

kkr::Dataset bistable(std::size_t n) {
  return kkr::sample_dataset(kkr::SystemSpec::bistable(), kkr::ObservableSpec::coordinate(0),
                             kkr::Box::cube(1, -1.0, 1.0), n, kDt, kHorizon, 1);
}

kkr::BaseKernelSpec rbf() {
  kkr::BaseKernelSpec base;
  base.length_scale = 0.05;
  return base;
}

void BM_BaseGram(benchmark::State& state) {
  const kkr::Dataset data = bistable(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kkr::BaseGramTensor(data, rbf()));
}
BENCHMARK(BM_BaseGram)->Arg(25)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_AssembleGram(benchmark::State& state) {
  const kkr::Dataset data = bistable(static_cast<std::size_t>(state.range(0)));
  const kkr::Spectrum spectrum = kkr::sample_uniform_disk(static_cast<std::size_t>(state.range(1)), 3, kDt);
  const kkr::BaseGramTensor base(data, rbf());
  for (auto _ : state) benchmark::DoNotOptimize(kkr::assemble_gram(base, spectrum));
}
BENCHMARK(BM_AssembleGram)->Args({50, 50})->Args({50, 200})->Args({200, 50})->Unit(benchmark::kMillisecond);

void BM_FitKKR(benchmark::State& state) {
  const kkr::Dataset data = bistable(static_cast<std::size_t>(state.range(0)));
  const kkr::Spectrum spectrum = kkr::sample_uniform_disk(50, 3, kDt);
  kkr::KKRConfig config;
  config.gamma = 1e-6;
  kkr::ScopedWarningHandler quiet([](std::string_view) {});
  for (auto _ : state) benchmark::DoNotOptimize(kkr::fit(data, spectrum, rbf(), config));
}
BENCHMARK(BM_FitKKR)->Arg(25)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_ForecastKKR(benchmark::State& state) {
  const kkr::Dataset data = bistable(100);
  const kkr::Spectrum spectrum = kkr::sample_uniform_disk(100, 3, kDt);
  kkr::KKRConfig config;
  config.gamma = 1e-6;
  const kkr::KKRModel model = kkr::fit(data, spectrum, rbf(), config);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(kkr::forecast(model, x0, kHorizon));
}
BENCHMARK(BM_ForecastKKR)->Unit(benchmark::kMicrosecond);

void BM_FitEDMD(benchmark::State& state) {
  const kkr::SnapshotPairs pairs = kkr::make_pairs(bistable(static_cast<std::size_t>(state.range(0))));
  kkr::ScopedWarningHandler quiet([](std::string_view) {});
  for (auto _ : state) benchmark::DoNotOptimize(kkr::fit_pcr(pairs, 20, rbf()));
}
BENCHMARK(BM_FitEDMD)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
