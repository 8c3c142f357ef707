#include <benchmark/benchmark.h>

#include "misspec/learners.hpp"

using namespace misspec;

namespace {

const ProblemSpec kSpec = ProblemSpec::make(0.2, 0.3, 0.5);

void BM_SampleExplicit(benchmark::State& state) {
  const auto m = static_cast<std::uint64_t>(state.range(0));
  const auto k = static_cast<std::uint64_t>(state.range(1));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_explicit(kSpec, m, k, ++seed));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * k));
}
BENCHMARK(BM_SampleExplicit)->Args({32, 4095})->Args({256, 65535});

void BM_SampleAggregated(benchmark::State& state) {
  const auto m = static_cast<std::uint64_t>(state.range(0));
  const auto prior = ClassifierPrior::dyadic_block();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_aggregated(kSpec, m, prior, 0, ++seed));
}
BENCHMARK(BM_SampleAggregated)->RangeMultiplier(4)->Range(256, 16384)->Unit(benchmark::kMicrosecond);

void BM_EvidenceTable(benchmark::State& state) {
  const auto m = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(EvidenceTable(m, ThetaPrior::uniform()));
}
BENCHMARK(BM_EvidenceTable)->RangeMultiplier(4)->Range(256, 16384)->Unit(benchmark::kMicrosecond);

void BM_Selectors(benchmark::State& state) {
  const auto m = static_cast<std::uint64_t>(state.range(0));
  const auto prior = ClassifierPrior::dyadic_block();
  const HypothesisSet set = make_hypotheses(sample_aggregated(kSpec, m, prior, 0, 1), prior, true);
  const EvidenceTable table(m, ThetaPrior::uniform());
  for (auto _ : state)
    for (Algorithm a : {Algorithm::kMap, Algorithm::kSmap, Algorithm::kMdl, Algorithm::kOrb})
      benchmark::DoNotOptimize(select(a, set, table));
}
BENCHMARK(BM_Selectors)->RangeMultiplier(4)->Range(256, 16384)->Unit(benchmark::kMicrosecond);

void BM_BayesPredictor(benchmark::State& state) {
  const auto m = static_cast<std::uint64_t>(state.range(0));
  const ProblemSpec spec = ProblemSpec::make(0.2, 0.3, 0.55);
  const auto prior = ClassifierPrior::dyadic_block();
  const HypothesisSet set = make_hypotheses(sample_aggregated(spec, m, prior, 0, 1), prior, true);
  const EvidenceTable table(m, ThetaPrior::uniform());
  const BayesPredictor predictor(set, table);
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(bayes_generalization(predictor, spec, 10000, ++seed));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_BayesPredictor)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_SequentialAggregated(benchmark::State& state) {
  const auto m = static_cast<std::uint64_t>(state.range(0));
  const auto prior = ClassifierPrior::dyadic_block();
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        sequential_bayes_aggregated(kSpec, m, prior, ThetaPrior::uniform(), ++seed));
}
BENCHMARK(BM_SequentialAggregated)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
