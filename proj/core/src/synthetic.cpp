#include "deepbow/synthetic.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

#include "deepbow/error.hpp"
#include "deepbow/vocab.hpp"

namespace deepbow {

namespace {

std::vector<std::string> split(const std::string& text)
{
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) {
        out.push_back(std::move(w));
    }
    return out;
}

std::string join(const std::vector<std::string>& words)
{
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) {
            out += ' ';
        }
        out += w;
    }
    return out;
}

std::string encode_utf8(char32_t cp)
{
    std::string out;
    if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
    } else {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    }
    out += static_cast<char>(0x80 | (cp & 0x3F));
    return out;
}

// Two-ideograph words over a fixed character pool, like short Chinese terms.
std::vector<std::string> invent_words(std::size_t n, std::size_t pool, SplitMix64& rng)
{
    std::vector<std::string> chars;
    chars.reserve(pool);
    const std::size_t stride = std::max<std::size_t>(1, 20000 / pool);
    for (std::size_t i = 0; i < pool; ++i) {
        chars.push_back(encode_utf8(static_cast<char32_t>(0x4E00 + stride * i)));
    }
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < n) {
        const auto a = rng.below(pool);
        const auto b = rng.below(pool);
        if (a == b) {
            continue;
        }
        std::string w = chars[a] + chars[b];
        if (seen.insert(w).second) {
            out.push_back(std::move(w));
        }
    }
    return out;
}

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

}  // namespace

int SyntheticData::label(const std::string& query, const std::string& product) const
{
    const auto pw = split(product);
    const std::unordered_set<std::string> have(pw.begin(), pw.end());
    for (const auto& w : split(query)) {
        if (have.count(w) != 0) {
            continue;
        }
        auto it = synonym_of.find(w);
        if (it != synonym_of.end() && have.count(it->second) != 0) {
            continue;
        }
        return 0;
    }
    return 1;
}

bool SyntheticData::synonym_dependent(const std::string& query) const
{
    const auto qw = split(query);
    return std::any_of(qw.begin(), qw.end(), [&](const auto& w) { return synonym_of.count(w) != 0; });
}

std::vector<std::string> SyntheticData::corpus() const
{
    std::vector<std::string> out;
    for (const auto* split_set : {&train, &valid, &test}) {
        for (const auto& e : *split_set) {
            out.push_back(e.query);
            out.push_back(e.product);
        }
    }
    return out;
}

std::vector<std::string> SyntheticData::vocabulary_corpus() const
{
    auto out = corpus();
    std::string spelled;
    for (const auto& w : words) {
        for (const auto& ch : utf8_scalars(w)) {
            spelled += ch;
            spelled += ' ';
        }
    }
    out.push_back(std::move(spelled));
    return out;
}

double exact_overlap(const std::string& query, const std::string& product)
{
    const auto qw = split(query);
    const auto pw = split(product);
    if (qw.empty()) {
        return 0.0;
    }
    const std::unordered_set<std::string> have(pw.begin(), pw.end());
    const auto hits = std::count_if(qw.begin(), qw.end(), [&](const auto& w) { return have.count(w) != 0; });
    return static_cast<double>(hits) / static_cast<double>(qw.size());
}

SyntheticData generate_synthetic(const SyntheticConfig& c)
{
    if (c.words < 2 * c.synonym_pairs + c.max_query_words + c.max_filler_words || c.min_query_words == 0
        || c.min_query_words > c.max_query_words || c.min_filler_words > c.max_filler_words || c.characters < 2
        || c.characters > 20000 || c.words > c.characters * (c.characters - 1) / 2) {
        throw Error(ErrorCode::config, "synthetic generator sizes are inconsistent");
    }
    SplitMix64 rng(c.seed);
    SyntheticData data;
    data.words = invent_words(c.words, c.characters, rng);

    std::vector<std::size_t> order(c.words);
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    shuffle(order, rng);
    std::vector<std::string> synonym_words;
    for (std::size_t p = 0; p < c.synonym_pairs; ++p) {
        const auto& a = data.words[order[2 * p]];
        const auto& b = data.words[order[2 * p + 1]];
        data.synonym_of[a] = b;
        data.synonym_of[b] = a;
        synonym_words.push_back(a);
        synonym_words.push_back(b);
    }

    auto pick_word = [&] { return data.words[rng.below(data.words.size())]; };
    auto range = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };

    auto make_example = [&]() -> RelevanceExample {
        std::vector<std::string> query;
        std::set<std::string> used;
        const auto k = range(c.min_query_words, c.max_query_words);
        if (!synonym_words.empty() && rng.uniform() < c.synonym_query_rate) {
            query.push_back(synonym_words[rng.below(synonym_words.size())]);
            used.insert(query.back());
        }
        while (query.size() < k) {
            auto w = pick_word();
            auto syn = data.synonym_of.find(w);
            if (used.count(w) != 0 || (syn != data.synonym_of.end() && used.count(syn->second) != 0)) {
                continue;
            }
            used.insert(w);
            query.push_back(std::move(w));
        }
        shuffle(query, rng);
        // forbid fillers that would cover a query word by accident
        std::set<std::string> forbidden(query.begin(), query.end());
        for (const auto& w : query) {
            if (auto it = data.synonym_of.find(w); it != data.synonym_of.end()) {
                forbidden.insert(it->second);
            }
        }

        const bool positive = rng.uniform() < 0.5;
        std::vector<std::string> product;
        if (!positive && rng.uniform() < c.easy_negative_rate) {
            const auto n = range(c.min_query_words + c.min_filler_words, c.max_query_words + c.max_filler_words);
            while (product.size() < n) {
                auto w = pick_word();
                if (forbidden.count(w) == 0) {
                    product.push_back(std::move(w));
                }
            }
        } else {
            const std::size_t drop = positive ? query.size() : rng.below(query.size());
            for (std::size_t i = 0; i < query.size(); ++i) {
                if (i == drop) {
                    continue;
                }
                auto it = data.synonym_of.find(query[i]);
                const bool swap = it != data.synonym_of.end() && rng.uniform() < c.substitution_rate;
                product.push_back(swap ? it->second : query[i]);
            }
            const auto fill = range(c.min_filler_words, c.max_filler_words);
            for (std::size_t f = 0; f < fill;) {
                auto w = pick_word();
                if (forbidden.count(w) == 0) {
                    product.push_back(std::move(w));
                    ++f;
                }
            }
            shuffle(product, rng);
        }
        RelevanceExample e{join(query), join(product), 0};
        e.label = data.label(e.query, e.product);
        return e;
    };

    for (auto [out, n] : {std::pair{&data.train, c.train}, std::pair{&data.valid, c.valid},
                          std::pair{&data.test, c.test}}) {
        out->reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            out->push_back(make_example());
        }
    }
    return data;
}

}  // namespace deepbow
