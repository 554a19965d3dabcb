#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deepbow {

using TokenId = std::uint32_t;

/// Joins the words of an n-gram. ASCII unit separator never occurs in
/// segmented corpus text, so "a b" as one surface cannot collide with the
/// bigram (a, b).
inline constexpr char kNgramSeparator = '\x1f';

enum class Granularity { character, word };

struct TokenSequence {
    std::vector<TokenId> tokens;
    std::vector<std::string> surfaces;
    Granularity granularity = Granularity::word;

    [[nodiscard]] std::size_t size() const noexcept { return tokens.size(); }
    [[nodiscard]] bool empty() const noexcept { return tokens.empty(); }
};

/// Splits text into word surfaces.
using Segmenter = std::function<std::vector<std::string>(std::string_view)>;

/// Process-wide registry of word segmenters. "whitespace" is always present.
class SegmenterRegistry {
  public:
    static SegmenterRegistry& instance();

    void add(std::string id, Segmenter segmenter);
    [[nodiscard]] bool contains(std::string_view id) const;
    /// Throws Error{config} for an unknown id.
    [[nodiscard]] const Segmenter& get(std::string_view id) const;

  private:
    SegmenterRegistry();
    std::unordered_map<std::string, Segmenter> m_segmenters;
};

std::vector<std::string> whitespace_segmenter(std::string_view text);

/// Raw MD5 digest of the bytes of `data`.
std::array<std::uint8_t, 16> md5_digest(std::string_view data);
std::string md5_hex(std::string_view data);
/// The 128-bit digest read as a big-endian unsigned integer, reduced mod `modulus`.
std::uint64_t md5_mod(std::string_view data, std::uint64_t modulus);

struct VocabEntry {
    std::string surface;
    std::uint64_t frequency = 0;
};

/// Dense in-vocabulary words [0, v) followed by B hashing buckets [v, v+B).
class Vocabulary {
  public:
    Vocabulary() = default;
    Vocabulary(std::vector<VocabEntry> words, std::uint32_t buckets, std::uint32_t ngram_order,
               std::string segmenter_id);

    /// Surface form → index; OOV forms land in v + md5(surface) mod B.
    [[nodiscard]] TokenId lookup(std::string_view surface) const;
    [[nodiscard]] bool contains(std::string_view surface) const;

    /// Surface of an in-vocabulary index, or "‹hash:b›" for a bucket.
    [[nodiscard]] std::string surface(TokenId index) const;

    [[nodiscard]] std::uint32_t v() const noexcept { return static_cast<std::uint32_t>(m_words.size()); }
    [[nodiscard]] std::uint32_t buckets() const noexcept { return m_buckets; }
    [[nodiscard]] std::uint32_t size() const noexcept { return v() + m_buckets; }
    [[nodiscard]] std::uint32_t ngram_order() const noexcept { return m_ngram_order; }
    [[nodiscard]] const std::string& segmenter_id() const noexcept { return m_segmenter_id; }
    [[nodiscard]] const std::vector<VocabEntry>& words() const noexcept { return m_words; }

    /// MD5 of the canonical vocabulary file; identifies the vocabulary in
    /// checkpoints and stores.
    [[nodiscard]] std::string hash() const;

    void write(std::ostream& out) const;
    static Vocabulary read(std::istream& in);
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b);

  private:
    std::vector<VocabEntry> m_words;
    std::unordered_map<std::string, TokenId> m_index;
    std::uint32_t m_buckets = 0;
    std::uint32_t m_ngram_order = 1;
    std::string m_segmenter_id = "whitespace";
};

bool operator==(const VocabEntry& a, const VocabEntry& b);

struct VocabConfig {
    std::uint32_t v = 50000;
    std::uint32_t buckets = 10000;
    std::uint32_t ngram_order = 2;
    std::string segmenter = "whitespace";
};

/// Counts word frequencies and keeps the `v` most frequent (ties by surface).
Vocabulary build_vocabulary(std::span<const std::string> corpus, const VocabConfig& config);

TokenSequence segment_characters(std::string_view text, const Vocabulary& vocab);
TokenSequence segment_words(std::string_view text, const Vocabulary& vocab);
TokenSequence segment_words(std::string_view text, const Vocabulary& vocab, std::string_view segmenter_id);

/// All contiguous n-grams of length 2..order, joined by kNgramSeparator.
TokenSequence extract_ngrams(const TokenSequence& words, std::uint32_t order, const Vocabulary& vocab);

/// Unicode scalar values of a UTF-8 string; invalid bytes become U+FFFD.
std::vector<std::string> utf8_scalars(std::string_view text);

}  // namespace deepbow
