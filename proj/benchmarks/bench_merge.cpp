#include <benchmark/benchmark.h>

#include "dimerge/dimerge.hpp"
#include "fixtures.hpp"

using namespace dimerge;
using dimerge::fixtures::FixtureOptions;
using dimerge::fixtures::make_fixture;
using dimerge::fixtures::make_record;
using dimerge::fixtures::Rng;

namespace {

AlignedTriple square_triple(std::int64_t n) {
    Rng rng(1);
    const auto size = static_cast<std::size_t>(n * n);
    const auto base = rng.normals(size);
    auto ml = base, mm = base;
    for (auto& x : ml) x += rng.normal(0.02);
    for (auto& x : mm) x += rng.normal(0.01);
    return {"w", make_record("w", {n, n}, base), make_record("w", {n, n}, ml), make_record("w", {n, n}, mm)};
}

void BM_ColumnDeviations(benchmark::State& state) {
    const auto t = square_triple(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = t.ml.values(), b = t.base.values();
    for (auto _ : state) {
        benchmark::DoNotOptimize(column_deviations({a, n, n}, {b, n, n}, kDefaultEpsilon));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_ColumnDeviations)->Arg(256)->Arg(1024);

void BM_RankNormalize(benchmark::State& state) {
    Rng rng(2);
    const auto v = rng.normals(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(rank_normalize(v));
}
BENCHMARK(BM_RankNormalize)->Arg(4096)->Arg(14336);

void BM_MergeMatrix(benchmark::State& state) {
    const auto t = square_triple(state.range(0));
    const MergeConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(merge_matrix(t, cfg));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_MergeMatrix)->Arg(256)->Arg(1024);

void BM_DareValues(benchmark::State& state) {
    Rng rng(3);
    const auto d = rng.normals(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(dare_values(d, 0.9, 7, "w::ml"));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DareValues)->Arg(1 << 20);

void BM_MergeCheckpoint(benchmark::State& state) {
    FixtureOptions o;
    o.layers = 4;
    o.hidden = 128;
    o.intermediate = 344;
    o.vocab = 1024;
    const auto f = make_fixture(o);
    const MergeConfig cfg;
    const auto workers = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(merge_checkpoint(f.base, f.ml, f.anchor, cfg, workers));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.base.parameter_count()));
}
BENCHMARK(BM_MergeCheckpoint)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
