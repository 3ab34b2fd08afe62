#include <benchmark/benchmark.h>

#include "stratarm/adjust.hpp"
#include "stratarm/design.hpp"
#include "stratarm/inference.hpp"
#include "stratarm/montecarlo.hpp"

namespace stratarm {
namespace {

MatrixXd gaussian(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// A Model 1 draw with a matched-triples assignment and revealed outcomes.
struct Prepared {
  ExperimentData data;
  Design design;
  GroupPairing pairing;
};

Prepared prepare(Index n, Index dim) {
  Rng rng(7);
  auto draw = generate_model(model_params(1, dim), n, rng);
  Prepared out;
  out.design = assign_matched_tuples(draw.data.psi, Propensity(2, 3), 11);
  const auto restricted = restrict_to_groups(draw.data, out.design);
  out.data = restricted.data;
  out.design = restricted.design;
  out.data.d = out.design.treatment;
  const auto& units = restricted.units;
  for (Index i = 0; i < out.data.n(); ++i) {
    const auto u = units[static_cast<std::size_t>(i)];
    out.data.y[i] = out.data.d[i] == 1.0 ? draw.y1[u] : draw.y0[u];
  }
  out.pairing = pair_groups(out.design, out.data.psi);
  return out;
}

void BM_MatchTuples(benchmark::State& state) {
  const MatrixXd psi = gaussian(state.range(0), state.range(1), 3);
  for (auto _ : state) benchmark::DoNotOptimize(match_tuples(psi, 3));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatchTuples)->ArgsProduct({{300, 1200, 4800}, {1, 2, 5}})->Unit(benchmark::kMillisecond);

void BM_PairGroups(benchmark::State& state) {
  const auto prepared = prepare(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(pair_groups(prepared.design, prepared.data.psi));
}
BENCHMARK(BM_PairGroups)->Arg(60)->Arg(600)->Arg(4800)->Unit(benchmark::kMicrosecond);

void BM_Estimator(benchmark::State& state) {
  const auto prepared = prepare(1200, 5);
  const auto id = static_cast<EstimatorId>(state.range(0));
  const bool with_z = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(estimate(id, prepared.data, &prepared.design, with_z));
  state.SetLabel(std::string(to_string(id)) + (with_z ? "+z" : ""));
}
BENCHMARK(BM_Estimator)
    ->ArgsProduct({{static_cast<long>(EstimatorId::kUnadj), static_cast<long>(EstimatorId::kLin),
                    static_cast<long>(EstimatorId::kFe), static_cast<long>(EstimatorId::kPlin),
                    static_cast<long>(EstimatorId::kGo), static_cast<long>(EstimatorId::kTom),
                    static_cast<long>(EstimatorId::kAdaptive)},
                   {0, 1}})
    ->Unit(benchmark::kMicrosecond);

void BM_ExactVariance(benchmark::State& state) {
  const auto prepared = prepare(state.range(0), 2);
  const auto est = partialled_lin(prepared.data, prepared.design, false);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_variance(est, prepared.data, prepared.design, prepared.pairing));
  }
}
BENCHMARK(BM_ExactVariance)->Arg(600)->Arg(4800)->Unit(benchmark::kMicrosecond);

void BM_Hc2(benchmark::State& state) {
  const auto prepared = prepare(state.range(0), 2);
  const auto est = lin(prepared.data, true);
  for (auto _ : state) benchmark::DoNotOptimize(ehw_hc2_variance(est, prepared.data));
}
BENCHMARK(BM_Hc2)->Arg(600)->Arg(4800)->Unit(benchmark::kMicrosecond);

void BM_Replication(benchmark::State& state) {
  SimScenario s;
  s.model_id = 1;
  s.n = state.range(0);
  s.dim_psi = 2;
  s.reps = 4;
  s.jobs = 1;
  s.estimators = table_estimators();
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(s));
  state.SetItemsProcessed(state.iterations() * s.reps);
}
BENCHMARK(BM_Replication)->Arg(600)->Arg(1200)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace stratarm

BENCHMARK_MAIN();
