#include "deepbow/scoring.hpp"

#include "deepbow/error.hpp"

namespace deepbow {

std::string_view to_string(ScoreMode mode) noexcept
{
    return mode == ScoreMode::q_weight ? "q_weight" : "q_synonym";
}

ScoreMode parse_score_mode(std::string_view text)
{
    if (text == "q_weight" || text == "q-weight" || text == "t") {
        return ScoreMode::q_weight;
    }
    if (text == "q_synonym" || text == "q-synonym" || text == "s") {
        return ScoreMode::q_synonym;
    }
    throw Error(ErrorCode::config, "unknown score mode '" + std::string(text) + "'");
}

namespace {

template <bool Count>
double two_pointer(const SparseBoW& a, const SparseBoW& b, std::size_t* advances)
{
    const Posting* pa = a.entries.data();
    const Posting* pb = b.entries.data();
    const Posting* const ea = pa + a.entries.size();
    const Posting* const eb = pb + b.entries.size();
    double sum = 0.0;
    std::size_t steps = 0;
    while (pa != ea && pb != eb) {
        if (pa->index < pb->index) {
            ++pa;
            if constexpr (Count) {
                ++steps;
            }
        } else if (pb->index < pa->index) {
            ++pb;
            if constexpr (Count) {
                ++steps;
            }
        } else {
            sum += static_cast<double>(pa->weight) * static_cast<double>(pb->weight);
            ++pa;
            ++pb;
            if constexpr (Count) {
                steps += 2;
            }
        }
    }
    if constexpr (Count) {
        *advances = steps;
    }
    return sum;
}

}  // namespace

double intersect_dot(const SparseBoW& a, const SparseBoW& b)
{
#ifndef NDEBUG
    a.validate();
    b.validate();
#endif
    return two_pointer<false>(a, b, nullptr);
}

double intersect_dot_checked(const SparseBoW& a, const SparseBoW& b)
{
    a.validate();
    b.validate();
    return two_pointer<false>(a, b, nullptr);
}

double intersect_dot_counted(const SparseBoW& a, const SparseBoW& b, std::size_t& advances)
{
    return two_pointer<true>(a, b, &advances);
}

double score_q_weight(const SparseBoW& query, const SparseBoW& product)
{
    return intersect_dot(query, product);
}

SynonymScore score_q_synonym(const SparseBoW& query, const SparseBoW& product)
{
    const double mass = query.weight_sum();
    if (query.empty() || !(mass > 0.0)) {
        return {0.0, true};
    }
    return {intersect_dot(query, product) / mass, false};
}

double score_avg(const TokenSequence& query_words, const SparseBoW& product)
{
    return intersect_dot(avg_bow(query_words), product);
}

double score(const SparseBoW& query, const SparseBoW& product, ScoreMode mode)
{
    return mode == ScoreMode::q_weight ? score_q_weight(query, product) : score_q_synonym(query, product).score;
}

MatchExplanation explain(const SparseBoW& query, const SparseBoW& product, const Vocabulary* vocab, ScoreMode mode)
{
    MatchExplanation out;
    out.total = score(query, product, mode);
    double scale = 1.0;
    if (mode == ScoreMode::q_synonym) {
        const double mass = query.weight_sum();
        if (query.empty() || !(mass > 0.0)) {
            return out;
        }
        scale = 1.0 / mass;
    }

    auto qa = query.entries.begin();
    auto pb = product.entries.begin();
    while (qa != query.entries.end() && pb != product.entries.end()) {
        if (qa->index < pb->index) {
            ++qa;
        } else if (pb->index < qa->index) {
            ++pb;
        } else {
            MatchRow row;
            row.index = qa->index;
            row.term = vocab != nullptr ? vocab->surface(qa->index) : "#" + std::to_string(qa->index);
            row.p = static_cast<double>(qa->weight) * scale;
            row.g = static_cast<double>(pb->weight);
            row.pg = row.p * row.g;
            out.matches.push_back(std::move(row));
            ++qa;
            ++pb;
        }
    }
    return out;
}

}  // namespace deepbow
