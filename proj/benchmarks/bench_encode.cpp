#include <benchmark/benchmark.h>

#include "deepbow/model.hpp"
#include "deepbow/synthetic.hpp"

using namespace deepbow;

namespace {

struct Setup {
    SyntheticData data;
    Vocabulary vocab;
    DeepBowModel model;

    Setup()
    {
        SyntheticConfig sc;
        sc.train = 2000;
        sc.valid = 0;
        sc.test = 0;
        data = generate_synthetic(sc);
        VocabConfig vc;
        vc.v = 1500;
        vc.buckets = 2000;
        vocab = build_vocabulary(data.corpus(), vc);
        model = DeepBowModel::initialize(ModelConfig{}, vocab);
    }
};

const Setup& setup()
{
    static const Setup s;
    return s;
}

void BM_EncodeProduct(benchmark::State& state)
{
    const auto& s = setup();
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& text = s.data.train[i++ % s.data.train.size()].product;
        benchmark::DoNotOptimize(
            represent(s.model, s.vocab, text, Side::product, ScoreMode::q_synonym, TruncationPolicy::threshold(0.4)));
    }
}
BENCHMARK(BM_EncodeProduct)->Unit(benchmark::kMicrosecond);

void BM_EncodeQueryTermWeighting(benchmark::State& state)
{
    const auto& s = setup();
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& text = s.data.train[i++ % s.data.train.size()].query;
        benchmark::DoNotOptimize(
            represent(s.model, s.vocab, text, Side::query, ScoreMode::q_weight, TruncationPolicy::none()));
    }
}
BENCHMARK(BM_EncodeQueryTermWeighting)->Unit(benchmark::kMicrosecond);

}  // namespace
