#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepbow/bow.hpp"
#include "deepbow/vocab.hpp"

namespace deepbow {

enum class ScoreMode { q_weight, q_synonym };

std::string_view to_string(ScoreMode mode) noexcept;
/// Accepts "q_weight"/"q-weight" and "q_synonym"/"q-synonym".
ScoreMode parse_score_mode(std::string_view text);

/// Σ a.w·b.w over shared indices, one forward pass of two cursors.
///
/// Cursor rule: advance the cursor holding the smaller index; on equal indices
/// accumulate, then advance both. Products are formed and summed in 64-bit in
/// ascending index order, so the result is symmetric bit-for-bit.
/// Inputs must satisfy the SparseBoW invariants; builds without NDEBUG check them.
double intersect_dot(const SparseBoW& a, const SparseBoW& b);
/// Validates both inputs (Error{contract}) before intersecting.
double intersect_dot_checked(const SparseBoW& a, const SparseBoW& b);
/// Same result, also reports how many cursor advances were made.
double intersect_dot_counted(const SparseBoW& a, const SparseBoW& b, std::size_t& advances);

/// R_t: query as term-weighting representation, product as synonym expansion.
double score_q_weight(const SparseBoW& query, const SparseBoW& product);

struct SynonymScore {
    double score = 0.0;
    bool degenerate_query = false;  // query had no weight mass; score forced to 0
};

/// R_s: intersection normalized by the query's total weight C.
SynonymScore score_q_synonym(const SparseBoW& query, const SparseBoW& product);

/// R_avg: uniform 1/n weights over the query words. Error{input} if empty.
double score_avg(const TokenSequence& query_words, const SparseBoW& product);

/// Dispatches to score_q_weight / score_q_synonym.
double score(const SparseBoW& query, const SparseBoW& product, ScoreMode mode);

struct MatchRow {
    TokenId index = 0;
    std::string term;
    double p = 0.0;   // query weight (divided by C in q_synonym mode)
    double g = 0.0;   // product weight
    double pg = 0.0;  // contribution
};

struct MatchExplanation {
    std::vector<MatchRow> matches;
    double total = 0.0;
};

/// Per-term breakdown of score(query, product, mode). `vocab` resolves
/// surfaces; hashing buckets print as ‹hash:b›, and without a vocabulary every
/// term prints as #index.
MatchExplanation explain(const SparseBoW& query, const SparseBoW& product, const Vocabulary* vocab, ScoreMode mode);

}  // namespace deepbow
