#include <benchmark/benchmark.h>

#include <sstream>

#include "deepbow/store.hpp"

using namespace deepbow;

namespace {

std::string serialized_store(std::size_t entries)
{
    SplitMix64 rng(3);
    StoreMetadata meta;
    meta.index_space = 60000;
    BoWStore store(meta);
    for (std::size_t i = 0; i < entries; ++i) {
        SparseBoW bow;
        TokenId next = 0;
        for (int k = 0; k < 64; ++k) {
            next += static_cast<TokenId>(1 + rng.below(900));
            bow.entries.push_back({next, static_cast<float>(rng.uniform(0.4, 1.0))});
        }
        store.put("p" + std::to_string(i), std::move(bow));
    }
    std::ostringstream out;
    write_store(out, store);
    return out.str();
}

void BM_ReadStore(benchmark::State& state)
{
    const auto bytes = serialized_store(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        std::istringstream in(bytes);
        benchmark::DoNotOptimize(read_store(in));
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_ReadStore)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
