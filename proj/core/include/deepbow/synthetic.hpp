#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "deepbow/training.hpp"

namespace deepbow {

/// Rule-labelled query/product pairs over invented two-ideograph words. Some
/// words come in synonym pairs with unrelated spellings; a pair is Good iff every
/// query word appears in the product either verbatim or as its synonym.
struct SyntheticConfig {
    std::size_t words = 2000;
    std::size_t synonym_pairs = 200;
    std::size_t characters = 1000;  // ideograph pool the words are spelled from
    std::size_t train = 20000;
    std::size_t valid = 2000;
    std::size_t test = 2000;
    std::size_t min_query_words = 2;
    std::size_t max_query_words = 3;
    std::size_t min_filler_words = 2;
    std::size_t max_filler_words = 4;
    double synonym_query_rate = 0.5;  // share of queries built around a synonym word
    double substitution_rate = 0.6;   // chance a covered word appears as its synonym
    double easy_negative_rate = 0.3;  // negatives with a random product
    std::uint64_t seed = 7;
};

struct SyntheticData {
    std::vector<std::string> words;
    std::unordered_map<std::string, std::string> synonym_of;  // both directions
    std::vector<RelevanceExample> train;
    std::vector<RelevanceExample> valid;
    std::vector<RelevanceExample> test;

    /// The labelling rule.
    [[nodiscard]] int label(const std::string& query, const std::string& product) const;
    /// True if some query word has a synonym.
    [[nodiscard]] bool synonym_dependent(const std::string& query) const;
    /// Every query and product text.
    [[nodiscard]] std::vector<std::string> corpus() const;
    /// corpus() plus every word spelled out character by character, so that
    /// a vocabulary built from it covers the characters as well.
    [[nodiscard]] std::vector<std::string> vocabulary_corpus() const;
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

/// Fraction of query words found verbatim in the product.
double exact_overlap(const std::string& query, const std::string& product);

}  // namespace deepbow
