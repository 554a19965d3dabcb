#include "deepbow/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "deepbow/error.hpp"
#include "deepbow/store.hpp"

namespace deepbow {

std::size_t ScoredSet::count_good() const noexcept
{
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

ScoredSet make_scored_set(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) {
        throw Error(ErrorCode::input, "scores and labels differ in length");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw Error(ErrorCode::input, "labels must be 0 or 1");
        }
    }
    return {{scores.begin(), scores.end()}, {labels.begin(), labels.end()}};
}

bool has_both_classes(const ScoredSet& set) noexcept
{
    const auto good = set.count_good();
    return good > 0 && good < set.size();
}

bool has_bad(const ScoredSet& set) noexcept
{
    return set.count_bad() > 0;
}

double roc_auc(const ScoredSet& set)
{
    if (!has_both_classes(set)) {
        throw Error(ErrorCode::undefined_metric, "ROC-AUC needs both Good and Bad examples");
    }
    const std::size_t n = set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return set.scores[a] < set.scores[b]; });

    // mid-ranks, 1-based; every value is an integer or half-integer so the sum is exact
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && set.scores[order[j]] == set.scores[order[i]]) {
            ++j;
        }
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (set.labels[order[k]] == 1) {
                rank_sum += mid;
            }
        }
        i = j;
    }
    const auto pos = static_cast<double>(set.count_good());
    const auto neg = static_cast<double>(set.count_bad());
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double neg_pr_auc(const ScoredSet& set)
{
    if (!has_bad(set)) {
        throw Error(ErrorCode::undefined_metric, "Neg PR-AUC needs at least one Bad example");
    }
    const std::size_t n = set.size();
    std::vector<double> inverted(n);
    for (std::size_t k = 0; k < n; ++k) {
        inverted[k] = 1.0 - set.scores[k];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return inverted[a] > inverted[b]; });

    const auto total_bad = static_cast<double>(set.count_bad());
    double ap = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t group_tp = 0;
        while (j < n && inverted[order[j]] == inverted[order[i]]) {
            group_tp += set.labels[order[j]] == 0 ? 1 : 0;
            ++j;
        }
        tp += group_tp;
        seen = j;
        if (group_tp > 0) {
            ap += (static_cast<double>(group_tp) / total_bad) * (static_cast<double>(tp) / static_cast<double>(seen));
        }
        i = j;
    }
    return ap;
}

EvalReport evaluate(const ScoredSet& set)
{
    EvalReport r;
    r.n = set.size();
    r.n_good = set.count_good();
    r.n_bad = set.count_bad();
    r.roc_auc = roc_auc(set);
    r.neg_pr_auc = neg_pr_auc(set);
    return r;
}

nlohmann::json EvalReport::to_json() const
{
    return {{"roc_auc", roc_auc}, {"neg_pr_auc", neg_pr_auc}, {"n", n}, {"n_good", n_good}, {"n_bad", n_bad}};
}

nlohmann::json LatencyReport::to_json() const
{
    return {{"pairs", pairs},     {"reps", reps},       {"min_us", min_us},
            {"mean_us", mean_us}, {"p99_us", p99_us}, {"adds_per_pair_mean", adds_per_pair_mean}};
}

LatencyReport bench_latency(const BoWStore& queries, const BoWStore& products,
                            std::span<const std::pair<std::string, std::string>> pairs, ScoreMode mode,
                            std::size_t reps)
{
    std::vector<std::pair<const SparseBoW*, const SparseBoW*>> resolved;
    resolved.reserve(pairs.size());
    for (const auto& [qid, pid] : pairs) {
        const auto* q = &queries.at(qid);
        resolved.emplace_back(q, &products.at(pid));
    }

    LatencyReport report;
    report.pairs = pairs.size();
    report.reps = reps;
    if (resolved.empty() || reps == 0) {
        return report;
    }

    std::size_t advances = 0;
    for (const auto& [q, p] : resolved) {
        std::size_t a = 0;
        intersect_dot_counted(*q, *p, a);
        advances += a;
    }
    report.adds_per_pair_mean = static_cast<double>(advances) / static_cast<double>(resolved.size());

    std::vector<double> times;
    times.reserve(reps);
    volatile double sink = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        auto start = std::chrono::steady_clock::now();
        double acc = 0.0;
        for (const auto& [q, p] : resolved) {
            acc += score(*q, *p, mode);
        }
        auto stop = std::chrono::steady_clock::now();
        sink = sink + acc;
        times.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
    }
    std::sort(times.begin(), times.end());
    report.min_us = times.front();
    report.mean_us = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
    const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(times.size()))) - 1;
    report.p99_us = times[std::min(idx, times.size() - 1)];
    return report;
}

}  // namespace deepbow
