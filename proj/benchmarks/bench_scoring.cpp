#include <benchmark/benchmark.h>

#include <map>

#include "deepbow/scoring.hpp"

using namespace deepbow;

namespace {

SparseBoW random_bow(SplitMix64& rng, std::size_t support, TokenId space)
{
    std::map<TokenId, float> m;
    while (m.size() < support) {
        m[static_cast<TokenId>(rng.below(space))] = static_cast<float>(rng.uniform(0.01, 1.0));
    }
    SparseBoW bow;
    for (auto [i, w] : m) {
        bow.entries.push_back({i, w});
    }
    return bow;
}

void BM_IntersectDot(benchmark::State& state)
{
    SplitMix64 rng(1);
    const auto support = static_cast<std::size_t>(state.range(0));
    auto a = random_bow(rng, support, 60000);
    auto b = random_bow(rng, support, 60000);
    for (auto _ : state) {
        benchmark::DoNotOptimize(intersect_dot(a, b));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * support));
}
BENCHMARK(BM_IntersectDot)->RangeMultiplier(4)->Range(8, 512);

// 1000 precomputed pairs per iteration, the serving workload.
void BM_ScoreThousandPairs(benchmark::State& state)
{
    SplitMix64 rng(2);
    std::vector<SparseBoW> qs;
    std::vector<SparseBoW> ps;
    for (int i = 0; i < 1000; ++i) {
        qs.push_back(random_bow(rng, 1 + rng.below(128), 60000));
        ps.push_back(random_bow(rng, 1 + rng.below(128), 60000));
    }
    for (auto _ : state) {
        double acc = 0.0;
        for (std::size_t i = 0; i < qs.size(); ++i) {
            acc += score(qs[i], ps[i], ScoreMode::q_synonym);
        }
        benchmark::DoNotOptimize(acc);
    }
}
BENCHMARK(BM_ScoreThousandPairs)->Unit(benchmark::kMicrosecond);

}  // namespace
