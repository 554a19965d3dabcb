#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepbow/scoring.hpp"

namespace deepbow {

class BoWStore;

/// Scores with binary labels (1 = Good, 0 = Bad).
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;

    [[nodiscard]] std::size_t size() const noexcept { return scores.size(); }
    [[nodiscard]] std::size_t count_good() const noexcept;
    [[nodiscard]] std::size_t count_bad() const noexcept { return size() - count_good(); }
};

/// Throws Error{input} on length mismatch or labels outside {0,1}.
ScoredSet make_scored_set(std::span<const double> scores, std::span<const int> labels);

[[nodiscard]] bool has_both_classes(const ScoredSet& set) noexcept;
[[nodiscard]] bool has_bad(const ScoredSet& set) noexcept;

/// Rank-sum ROC-AUC with Good as positive, ties counted one half.
/// Throws Error{undefined_metric} unless both classes are present.
double roc_auc(const ScoredSet& set);

/// Average precision for detecting Bad examples ranked by 1 - score; tied
/// scores form a single threshold. Throws Error{undefined_metric} without Bad.
double neg_pr_auc(const ScoredSet& set);

struct EvalReport {
    double roc_auc = 0.0;
    double neg_pr_auc = 0.0;
    std::size_t n = 0;
    std::size_t n_good = 0;
    std::size_t n_bad = 0;

    [[nodiscard]] nlohmann::json to_json() const;
};

EvalReport evaluate(const ScoredSet& set);

struct LatencyReport {
    std::size_t pairs = 0;
    std::size_t reps = 0;
    double min_us = 0.0;
    double mean_us = 0.0;
    double p99_us = 0.0;
    double adds_per_pair_mean = 0.0;  // cursor advances per pair

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Times scoring of every (query id, product id) pair, single-threaded, with
/// representations resolved from the stores before the clock starts.
/// Throws Error{not_found} naming the first missing id.
LatencyReport bench_latency(const BoWStore& queries, const BoWStore& products,
                            std::span<const std::pair<std::string, std::string>> pairs, ScoreMode mode,
                            std::size_t reps);

}  // namespace deepbow
