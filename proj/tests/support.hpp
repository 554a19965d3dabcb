#pragma once

#include <string>
#include <vector>

#include "deepbow/model.hpp"
#include "deepbow/training.hpp"

namespace testing_support {

// Vocabulary over `words` (frequency descending in list order) plus buckets.
inline deepbow::Vocabulary make_vocab(const std::vector<std::string>& words, std::uint32_t buckets,
                                      std::uint32_t ngram_order = 2)
{
    std::vector<deepbow::VocabEntry> entries;
    std::uint64_t freq = words.size() + 1;
    for (const auto& w : words) {
        entries.push_back({w, freq--});
    }
    return deepbow::Vocabulary(std::move(entries), buckets, ngram_order, "whitespace");
}

// 40 words + single letters + 6 buckets; letters make the character stream
// in-vocabulary.
inline deepbow::Vocabulary small_vocab()
{
    std::vector<std::string> words = {"red",   "dress",  "blue",  "shirt", "cotton", "silk",  "long",  "short",
                                      "women", "men",    "black", "white", "summer", "winter", "coat", "jacket",
                                      "new",   "classic", "slim", "loose"};
    for (char c = 'a'; c <= 'z'; ++c) {
        words.emplace_back(1, c);
    }
    words.resize(44);
    return make_vocab(words, 6);
}

inline deepbow::ModelConfig tiny_config()
{
    deepbow::ModelConfig c;
    c.d = 8;
    c.layers = 2;
    c.heads = 2;
    c.ffn = 16;
    c.max_len = 64;
    c.seed = 11;
    return c;
}

inline std::vector<deepbow::RelevanceExample> toy_examples()
{
    return {
        {"red dress", "red silk dress women", 1},
        {"red dress", "blue cotton shirt men", 0},
        {"blue shirt", "blue cotton shirt slim", 1},
        {"blue shirt", "black winter coat", 0},
        {"white coat", "white long coat women", 1},
        {"white coat", "red summer dress", 0},
        {"black jacket", "black classic jacket men", 1},
        {"black jacket", "white silk shirt", 0},
    };
}

}  // namespace testing_support
