// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "deepbow/checkpoint.hpp"
#include "deepbow/error.hpp"
#include "deepbow/metrics.hpp"
#include "deepbow/scoring.hpp"
#include "deepbow/service.hpp"
#include "deepbow/store.hpp"
#include "deepbow/synthetic.hpp"
#include "deepbow/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deepbow;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

SparseBoW random_bow(SplitMix64& rng, std::size_t max_support, TokenId space)
{
    std::map<TokenId, float> m;
    const auto n = rng.below(max_support + 1);
    while (m.size() < n) {
        m[static_cast<TokenId>(rng.below(space))] = static_cast<float>(rng.uniform(1e-4, 1.0));
    }
    SparseBoW bow;
    for (auto [i, w] : m) {
        bow.entries.push_back({i, w});
    }
    return bow;
}

std::string random_text(SplitMix64& rng, const std::vector<std::string>& words)
{
    static const std::vector<std::string> oov = {"zq", "xylo", "品质", "连衣裙", "l'oréal", "42"};
    std::string text;
    const auto n = 1 + rng.below(10);
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!text.empty()) {
            text += ' ';
        }
        text += rng.uniform() < 0.8 ? words[rng.below(words.size())] : oov[rng.below(oov.size())];
    }
    return text;
}

DeepBowModel perturbed_tiny_model(const Vocabulary& vocab, std::uint64_t seed)
{
    auto cfg = testing_support::tiny_config();
    cfg.seed = seed;
    auto m = DeepBowModel::initialize(cfg, vocab);
    SplitMix64 rng(seed * 7 + 1);
    for (auto& t : m.tensors()) {
        for (Eigen::Index i = 0; i < t.value->size(); ++i) {
            t.value->data()[i] += rng.uniform(-0.1, 0.1);
        }
    }
    return m;
}

std::vector<std::string> small_vocab_words()
{
    return {"red", "dress", "blue", "shirt", "cotton", "silk", "long", "short", "women", "men",
            "black", "white", "summer", "winter", "coat", "jacket", "new", "classic", "slim", "loose"};
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence()
{
    const auto start = Clock::now();
    SplitMix64 rng(1001);
    std::size_t mismatches = 0;
    std::size_t shared = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        auto a = random_bow(rng, 512, 60000);
        auto b = random_bow(rng, 512, 60000);
        const double got = intersect_dot(a, b);
        const double want = oracle::hashmap_dot(a, b);
        mismatches += got == want ? 0 : 1;
        shared += got != 0.0 ? 1 : 0;
    }
    const double secs = seconds_since(start);
    return {mismatches == 0 && secs < 10.0,
            fmt("10000 pairs, %zu mismatches, %zu with overlap, %.2f s", mismatches, shared, secs)};
}

Outcome worked_example()
{
    const std::vector<std::pair<std::string, float>> query = {
        {"连衣裙", 0.30148F}, {"高级感", 0.25785F}, {"小香风", 0.2277F}, {"新款", 0.21297F}};
    const std::vector<std::pair<std::string, float>> product = {
        {"品质", 1.0F},      {"v领", 1.0F},       {"秋", 0.99999F},    {"高腰", 0.99999F},  {"高级感", 0.99999F},
        {"通勤", 0.99999F},  {"秋季", 0.99998F},  {"秋冬", 0.99998F},  {"黑色", 0.99995F},  {"新款", 0.99934F},
        {"小香风", 0.99657F}, {"连衣裙", 0.98461F}, {"裙子", 0.98451F}, {"设计感", 0.94598F}};
    std::vector<std::string> words;
    for (const auto& [s, _] : product) {
        words.push_back(s);
    }
    auto vocab = testing_support::make_vocab(words, 4);
    auto to_bow = [&](const auto& items) {
        std::map<TokenId, float> m;
        for (const auto& [s, w] : items) {
            m[vocab.lookup(s)] = w;
        }
        SparseBoW out;
        for (auto [i, w] : m) {
            out.entries.push_back({i, w});
        }
        return out;
    };
    const auto q = to_bow(query);
    const auto p = to_bow(product);
    const double s = score_q_synonym(q, p).score;
    const auto ex = explain(q, p, &vocab, ScoreMode::q_synonym);

    const std::map<std::string, double> printed = {{"连衣裙", 0.30148 * 0.98461},
                                                   {"高级感", 0.25785 * 0.9999},
                                                   {"小香风", 0.2277 * 0.99657},
                                                   {"新款", 0.21297 * 0.99934}};
    bool rows_ok = ex.matches.size() == printed.size();
    double worst = 0.0;
    for (const auto& row : ex.matches) {
        auto it = printed.find(row.term);
        if (it == printed.end()) {
            rows_ok = false;
            continue;
        }
        worst = std::max(worst, std::abs(row.pg - it->second));
    }
    rows_ok = rows_ok && worst <= 1e-3;
    return {std::abs(s - 0.9944) <= 1e-3 && rows_ok,
            fmt("score %.6f (want 0.9944), %zu matched terms, worst p*g deviation %.2e", s, ex.matches.size(), worst)};
}

Outcome gradient_integrity()
{
    const auto start = Clock::now();
    auto vocab = testing_support::small_vocab();
    if (vocab.size() != 50) {
        return {false, "test vocabulary is not 50 tokens"};
    }
    double worst_group = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
    for (auto mode : {ScoreMode::q_weight, ScoreMode::q_synonym}) {
        for (int label : {0, 1}) {
            auto model = perturbed_tiny_model(vocab, 5 + static_cast<std::uint64_t>(label));
            TrainConfig cfg;
            cfg.mode = mode;
            cfg.v_norm = 50.0;
            auto ex = featurize_examples({{"red silk dress", "red dress women summer", label}}, vocab, 64);
            auto grads = DeepBowModel::zeros_like(model);
            example_loss(model, ex.at(0), cfg, &grads);
            auto loss = [&] { return example_loss(model, ex[0], cfg).total; };

            auto p = model.tensors();
            auto g = grads.tensors();
            for (std::size_t t = 0; t < p.size(); ++t) {
                const auto n = p[t].value->size();
                double diff = 0.0;
                double na = 0.0;
                double nn = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double numeric = oracle::central_difference(p[t].value->data() + i, 1e-4, loss);
                    const double analytic = g[t].value->data()[i];
                    diff += (analytic - numeric) * (analytic - numeric);
                    na += analytic * analytic;
                    nn += numeric * numeric;
                    ++checked;
                }
                const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
                const double rel = std::sqrt(diff) / scale;
                if (rel > worst_group) {
                    worst_group = rel;
                    worst_name = std::string(to_string(mode)) + ":" + p[t].name;
                }
            }
        }
    }
    const double secs = seconds_since(start);
    return {worst_group <= 1e-4 && secs < 120.0,
            fmt("%zu coordinates, worst group relative error %.2e (%s), %.1f s", checked, worst_group,
                worst_name.c_str(), secs)};
}

Outcome normalization_invariants()
{
    auto vocab = testing_support::small_vocab();
    auto model = perturbed_tiny_model(vocab, 21);
    const auto words = small_vocab_words();
    SplitMix64 rng(77);
    std::vector<SparseBoW> tw;
    std::vector<SparseBoW> se;
    double worst_sum = 0.0;
    std::size_t out_of_range = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto text = random_text(rng, words);
        auto t = represent(model, vocab, text, Side::query, ScoreMode::q_weight, TruncationPolicy::none());
        auto s = represent(model, vocab, text, Side::product, ScoreMode::q_synonym, TruncationPolicy::none());
        if (!t || !s) {
            return {false, "a non-empty text produced no representation: " + text};
        }
        worst_sum = std::max(worst_sum, std::abs(t->weight_sum() - 1.0));
        auto dense = expand(model, featurize(text, vocab, 64));
        out_of_range += static_cast<std::size_t>(
            (dense->weights.array() < 0.0).count() + (dense->weights.array() > 1.0).count());
        tw.push_back(std::move(*t));
        se.push_back(std::move(*s));
    }
    std::size_t bad_scores = 0;
    double lo = 1.0;
    double hi = 0.0;
    for (const auto& q : tw) {
        for (const auto& p : se) {
            const double r = score_q_weight(q, p);
            bad_scores += (r < 0.0 || r > 1.0) ? 1 : 0;
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    }
    for (const auto& q : se) {
        for (const auto& p : se) {
            const double r = score_q_synonym(q, p).score;
            bad_scores += (r < 0.0 || r > 1.0) ? 1 : 0;
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    }
    return {worst_sum <= 1e-6 && out_of_range == 0 && bad_scores == 0,
            fmt("max |sum TW - 1| %.2e, SE weights outside [0,1]: %zu, scores outside [0,1]: %zu of 2e6 "
                "(range %.4f..%.4f)",
                worst_sum, out_of_range, bad_scores, lo, hi)};
}

// Criteria 5 to 7 share one synthetic run.
struct EndToEnd {
    SyntheticData data;
    Vocabulary vocab;
    TrainResult with_norm;
    double seconds = 0.0;
    double test_auc = 0.0;
    double baseline_auc = 0.0;
    double dependent_auc = 0.0;
    double dependent_baseline_auc = 0.0;
    std::size_t dependent_n = 0;
};

AppConfig synthetic_config()
{
    AppConfig c;
    c.vocab.v = 2000;
    c.vocab.buckets = 2000;
    // the synthetic texts have no phrases, so bigram hash tokens would be pure noise
    c.vocab.ngram_order = 1;
    c.train.mode = ScoreMode::q_synonym;
    // at v+B the norm term is a few thousandths of the loss and cannot shape the support
    c.train.v_norm = 100.0;
    c.train.learning_rate = 1e-3;
    c.train.batch_tokens = 1024;
    c.train.max_epochs = 6;
    c.train.patience = 2;
    c.train.seed = 42;
    return c;
}

double auc_of(const std::vector<double>& scores, const std::vector<int>& labels)
{
    return roc_auc(make_scored_set(scores, labels));
}

EndToEnd run_end_to_end()
{
    const auto start = Clock::now();
    EndToEnd r;
    r.data = generate_synthetic(SyntheticConfig{});
    const auto config = synthetic_config();
    r.vocab = build_vocabulary(r.data.corpus(), config.vocab);
    auto model = DeepBowModel::initialize(config.model, r.vocab);
    r.with_norm = train(r.data.train, r.data.valid, r.vocab, model, config.train, [](const EpochMetrics& m) {
        std::printf("      epoch %d: loss %.4f valid ROC-AUC %.4f (%.0f s)\n", m.epoch, m.loss, m.roc_auc, m.seconds);
        std::fflush(stdout);
    });

    const auto test = featurize_examples(r.data.test, r.vocab, config.model.max_len);
    const auto scores = score_examples(r.with_norm.model, test, ScoreMode::q_synonym, TruncationPolicy::none());
    std::vector<int> labels;
    std::vector<double> baseline;
    std::vector<double> dep_scores;
    std::vector<double> dep_baseline;
    std::vector<int> dep_labels;
    // every synthetic text is non-empty, so featurized examples line up with the raw ones
    for (std::size_t i = 0; i < r.data.test.size(); ++i) {
        const auto& e = r.data.test[i];
        labels.push_back(e.label);
        baseline.push_back(exact_overlap(e.query, e.product));
        if (r.data.synonym_dependent(e.query)) {
            dep_scores.push_back(scores[i]);
            dep_baseline.push_back(baseline.back());
            dep_labels.push_back(e.label);
        }
    }
    r.test_auc = auc_of(scores, labels);
    r.baseline_auc = auc_of(baseline, labels);
    r.dependent_auc = auc_of(dep_scores, dep_labels);
    r.dependent_baseline_auc = auc_of(dep_baseline, dep_labels);
    r.dependent_n = dep_labels.size();
    r.seconds = seconds_since(start);
    return r;
}

Outcome end_to_end(const EndToEnd& r)
{
    const bool pass = r.test_auc >= 0.90 && r.dependent_auc >= r.dependent_baseline_auc + 0.05 && r.seconds < 900.0;
    return {pass, fmt("test ROC-AUC %.4f (exact-overlap baseline %.4f); synonym-dependent (n=%zu) %.4f vs "
                      "baseline %.4f; %zu epochs, %.0f s",
                      r.test_auc, r.baseline_auc, r.dependent_n, r.dependent_auc, r.dependent_baseline_auc,
                      r.with_norm.history.size(), r.seconds)};
}

Outcome truncation_robustness(const EndToEnd& r)
{
    const auto config = synthetic_config();
    const auto test = featurize_examples(r.data.test, r.vocab, config.model.max_len);
    const auto scores =
        score_examples(r.with_norm.model, test, ScoreMode::q_synonym, TruncationPolicy::threshold(0.4));
    std::vector<int> labels;
    for (const auto& e : test) {
        labels.push_back(e.label);
    }
    const double auc = auc_of(scores, labels);
    const double delta = auc - r.test_auc;

    // context only: the same threshold on the product side alone
    std::vector<double> product_only;
    for (const auto& e : test) {
        auto q = represent(r.with_norm.model, e.query, Side::query, ScoreMode::q_synonym, TruncationPolicy::none());
        auto p = represent(r.with_norm.model, e.product, Side::product, ScoreMode::q_synonym,
                           TruncationPolicy::threshold(0.4));
        product_only.push_back(q && p ? score(*q, *p, ScoreMode::q_synonym) : 0.0);
    }
    const double product_auc = auc_of(product_only, labels);
    return {std::abs(delta) <= 0.02,
            fmt("ROC-AUC %.4f untruncated, %.4f with +0.4 threshold on both sides (change %+.4f); "
                "product side only %.4f (change %+.4f)",
                r.test_auc, auc, delta, product_auc, product_auc - r.test_auc)};
}

double mean_support(const DeepBowModel& model, const Vocabulary& vocab, const std::vector<RelevanceExample>& examples)
{
    std::size_t total = 0;
    std::size_t texts = 0;
    for (const auto& e : examples) {
        for (const auto* text : {&e.query, &e.product}) {
            auto dense = expand(model, featurize(*text, vocab, model.config.max_len));
            total += static_cast<std::size_t>((dense->weights.array() >= 0.4).count());
            ++texts;
        }
    }
    return static_cast<double>(total) / static_cast<double>(texts);
}

Outcome sparsity_ablation(const EndToEnd& r)
{
    const auto start = Clock::now();
    auto config = synthetic_config();
    config.train.use_norm_loss = false;
    auto model = DeepBowModel::initialize(config.model, r.vocab);
    auto without = train(r.data.train, r.data.valid, r.vocab, model, config.train);
    const double with_support = mean_support(r.with_norm.model, r.vocab, r.data.test);
    const double without_support = mean_support(without.model, r.vocab, r.data.test);
    const double ratio = with_support > 0.0 ? without_support / with_support : 0.0;
    return {ratio >= 1.5, fmt("mean SE support (weight >= 0.4): %.2f with the norm term, %.2f without (ratio %.2f); "
                              "ablation run %.0f s",
                              with_support, without_support, ratio, seconds_since(start))};
}

Outcome latency_sanity()
{
    SplitMix64 rng(4242);
    StoreMetadata meta;
    meta.index_space = 60000;
    meta.side = Side::query;
    BoWStore queries(meta);
    meta.side = Side::product;
    BoWStore products(meta);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::size_t advances = 0;
    std::size_t bound = 0;
    bool linear = true;
    for (int i = 0; i < 1000; ++i) {
        auto q = random_bow(rng, 128, 60000);
        auto p = random_bow(rng, 128, 60000);
        std::size_t a = 0;
        intersect_dot_counted(q, p, a);
        linear = linear && a <= q.size() + p.size();
        advances += a;
        bound += q.size() + p.size();
        const auto id = std::to_string(i);
        queries.put(id, std::move(q));
        products.put(id, std::move(p));
        pairs.emplace_back(id, id);
    }
    const auto report = bench_latency(queries, products, pairs, ScoreMode::q_synonym, 200);
    return {report.mean_us < 5000.0 && linear,
            fmt("1000 pairs: mean %.1f us, min %.1f us, p99 %.1f us; cursor advances %zu <= %zu", report.mean_us,
                report.min_us, report.p99_us, advances, bound)};
}

Outcome metric_oracles()
{
    SplitMix64 rng(999);
    double worst_roc = 0.0;
    double worst_ap = 0.0;
    int roc_sets = 0;
    int ap_sets = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + rng.below(200);
        // coarse scores on every other set, so ties are common
        const double levels = trial % 2 == 0 ? 8.0 : 0.0;
        std::vector<double> scores;
        std::vector<int> labels;
        for (std::uint64_t i = 0; i < n; ++i) {
            const double s = rng.uniform();
            scores.push_back(levels > 0 ? std::floor(s * levels) / levels : s);
            labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
        }
        auto set = make_scored_set(scores, labels);
        if (has_both_classes(set)) {
            worst_roc = std::max(worst_roc, std::abs(roc_auc(set) - oracle::pairwise_auc(scores, labels)));
            ++roc_sets;
        }
        if (has_bad(set)) {
            worst_ap = std::max(worst_ap, std::abs(neg_pr_auc(set) - oracle::threshold_sweep_ap(scores, labels)));
            ++ap_sets;
        }
    }
    return {worst_roc <= 1e-12 && worst_ap <= 1e-12,
            fmt("ROC-AUC worst deviation %.1e over %d sets, Neg PR-AUC worst deviation %.1e over %d sets", worst_roc,
                roc_sets, worst_ap, ap_sets)};
}

std::string read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome persistence_and_serving()
{
    auto vocab = testing_support::small_vocab();
    auto model = perturbed_tiny_model(vocab, 33);
    const auto hash = model_hash(model);
    const auto words = small_vocab_words();
    SplitMix64 rng(55);
    std::vector<std::pair<std::string, std::string>> qtexts;
    std::vector<std::pair<std::string, std::string>> ptexts;
    for (int i = 0; i < 60; ++i) {
        qtexts.emplace_back("q" + std::to_string(i), random_text(rng, words));
        ptexts.emplace_back("p" + std::to_string(i), random_text(rng, words));
    }
    const auto policy = TruncationPolicy::threshold(0.4);
    auto queries = precompute(qtexts, model, hash, vocab, Side::query, ScoreMode::q_synonym, policy);
    auto products = precompute(ptexts, model, hash, vocab, Side::product, ScoreMode::q_synonym, policy);

    const auto dir = std::filesystem::temp_directory_path() / ("deepbow_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto qpath = dir / "queries.dbow";
    const auto ppath = dir / "products.dbow";
    const auto again = dir / "again.dbow";
    save_store(qpath.string(), queries);
    save_store(ppath.string(), products);
    auto qloaded = load_store(qpath.string());
    auto ploaded = load_store(ppath.string());
    save_store(again.string(), qloaded);
    const bool round_trip = qloaded == queries && ploaded == products && read_bytes(qpath) == read_bytes(again);

    Service service({&qloaded, &ploaded, nullptr, nullptr, {}});
    std::size_t served_equal = 0;
    for (int i = 0; i < 100; ++i) {
        const auto& qid = qtexts[rng.below(qtexts.size())].first;
        const auto& pid = ptexts[rng.below(ptexts.size())].first;
        const auto* q = queries.find(qid);
        const auto* p = products.find(pid);
        if (q == nullptr || p == nullptr) {
            continue;
        }
        auto line = service.handle_line(R"({"op":"score","mode":"q_synonym","qid":")" + qid + R"(","pid":")" + pid
                                        + R"("})");
        auto reply = nlohmann::json::parse(line);
        if (reply.contains("score") && reply["score"].get<double>() == score(*q, *p, ScoreMode::q_synonym)) {
            ++served_equal;
        }
    }

    auto bytes = read_bytes(ppath);
    std::size_t rejected = 0;
    std::size_t corruptions = 0;
    for (std::size_t offset = 8; offset < bytes.size(); offset += std::max<std::size_t>(1, bytes.size() / 25)) {
        auto broken = bytes;
        broken[offset] = static_cast<char>(broken[offset] ^ 0x5A);
        std::istringstream in(broken);
        ++corruptions;
        try {
            (void)read_store(in);
        } catch (const Error& e) {
            rejected += e.code() == ErrorCode::integrity ? 1 : 0;
        }
    }
    std::filesystem::remove_all(dir);
    return {round_trip && served_equal == 100 && rejected == corruptions,
            fmt("round trip %s, served == library on %zu/100 pairs, %zu/%zu corrupted files rejected by checksum",
                round_trip ? "bit-identical" : "DIFFERS", served_equal, rejected, corruptions)};
}

}  // namespace

int main()
{
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s  %2d %-26s %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "oracle-equivalence", oracle_equivalence);
    report(2, "worked-example-golden", worked_example);
    report(3, "gradient-integrity", gradient_integrity);
    report(4, "normalization-invariants", normalization_invariants);

    std::optional<EndToEnd> run;
    std::string run_error;
    try {
        std::printf("      training on the synthetic dataset\n");
        std::fflush(stdout);
        run = run_end_to_end();
    } catch (const std::exception& e) {
        run_error = e.what();
    }
    auto needs_run = [&](Outcome (*f)(const EndToEnd&)) {
        return [&, f]() -> Outcome {
            if (!run) {
                return {false, "synthetic run failed: " + run_error};
            }
            return f(*run);
        };
    };
    report(5, "end-to-end-learning", needs_run(end_to_end));
    report(6, "truncation-robustness", needs_run(truncation_robustness));
    report(7, "sparsity-ablation", needs_run(sparsity_ablation));

    report(8, "latency-sanity", latency_sanity);
    report(9, "metric-oracles", metric_oracles);
    report(10, "persistence-and-serving", persistence_and_serving);

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
