#include "deepbow/vocab.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <memory>
#include <sstream>

#include "deepbow/error.hpp"

namespace deepbow {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::build: return "build";
    case ErrorCode::config: return "config";
    case ErrorCode::input: return "input";
    case ErrorCode::internal: return "internal";
    case ErrorCode::contract: return "contract";
    case ErrorCode::undefined_metric: return "undefined_metric";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::integrity: return "integrity";
    case ErrorCode::version: return "version";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::io: return "io";
    case ErrorCode::numeric: return "numeric";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// hashing

std::array<std::uint8_t, 16> md5_digest(std::string_view data)
{
    std::array<std::uint8_t, 16> digest{};
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr) != 1
        || EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1
        || EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1 || len != digest.size()) {
        throw Error(ErrorCode::internal, "md5 digest failed");
    }
    return digest;
}

std::string md5_hex(std::string_view data)
{
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (auto byte : md5_digest(data)) {
        out.push_back(hex[byte >> 4]);
        out.push_back(hex[byte & 0xF]);
    }
    return out;
}

std::uint64_t md5_mod(std::string_view data, std::uint64_t modulus)
{
    if (modulus == 0) {
        throw Error(ErrorCode::config, "hash modulus must be positive");
    }
    // Horner over the big-endian bytes; modular doubling keeps everything below 2^64.
    auto add_mod = [modulus](std::uint64_t a, std::uint64_t b) { return a >= modulus - b ? a - (modulus - b) : a + b; };
    std::uint64_t acc = 0;
    for (auto byte : md5_digest(data)) {
        for (int bit = 0; bit < 8; ++bit) {
            acc = add_mod(acc, acc);
        }
        acc = add_mod(acc, static_cast<std::uint64_t>(byte) % modulus);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// segmentation

namespace {

bool is_ascii_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// U+3000 IDEOGRAPHIC SPACE shows up in CJK titles.
constexpr std::string_view kIdeographicSpace = "\xE3\x80\x80";

}  // namespace

std::vector<std::string> utf8_scalars(std::string_view text)
{
    static const std::string replacement = "\xEF\xBF\xBD";
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 0;
        if (lead < 0x80) {
            len = 1;
        } else if ((lead >> 5) == 0x6) {
            len = 2;
        } else if ((lead >> 4) == 0xE) {
            len = 3;
        } else if ((lead >> 3) == 0x1E) {
            len = 4;
        }
        bool valid = len > 0 && i + len <= text.size();
        for (std::size_t k = 1; valid && k < len; ++k) {
            valid = (static_cast<unsigned char>(text[i + k]) >> 6) == 0x2;
        }
        if (!valid) {
            out.push_back(replacement);
            ++i;
            continue;
        }
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

std::vector<std::string> whitespace_segmenter(std::string_view text)
{
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_ascii_space(text[i])) {
            ++i;
        }
        std::size_t start = i;
        while (i < text.size() && !is_ascii_space(text[i])) {
            ++i;
        }
        if (i > start) {
            words.emplace_back(text.substr(start, i - start));
        }
    }
    return words;
}

SegmenterRegistry::SegmenterRegistry()
{
    m_segmenters.emplace("whitespace", Segmenter(&whitespace_segmenter));
}

SegmenterRegistry& SegmenterRegistry::instance()
{
    static SegmenterRegistry registry;
    return registry;
}

void SegmenterRegistry::add(std::string id, Segmenter segmenter)
{
    m_segmenters.insert_or_assign(std::move(id), std::move(segmenter));
}

bool SegmenterRegistry::contains(std::string_view id) const
{
    return m_segmenters.find(std::string(id)) != m_segmenters.end();
}

const Segmenter& SegmenterRegistry::get(std::string_view id) const
{
    auto it = m_segmenters.find(std::string(id));
    if (it == m_segmenters.end()) {
        throw Error(ErrorCode::config, "unknown segmenter '" + std::string(id) + "'");
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// vocabulary

bool operator==(const VocabEntry& a, const VocabEntry& b)
{
    return a.surface == b.surface && a.frequency == b.frequency;
}

Vocabulary::Vocabulary(std::vector<VocabEntry> words, std::uint32_t buckets, std::uint32_t ngram_order,
                       std::string segmenter_id)
    : m_words(std::move(words)), m_buckets(buckets), m_ngram_order(ngram_order),
      m_segmenter_id(std::move(segmenter_id))
{
    if (m_buckets == 0) {
        throw Error(ErrorCode::config, "hashing bucket count B must be >= 1");
    }
    if (m_ngram_order == 0) {
        throw Error(ErrorCode::config, "ngram order must be >= 1");
    }
    m_index.reserve(m_words.size());
    for (std::size_t i = 0; i < m_words.size(); ++i) {
        auto [_, inserted] = m_index.emplace(m_words[i].surface, static_cast<TokenId>(i));
        if (!inserted) {
            throw Error(ErrorCode::build, "duplicate vocabulary surface '" + m_words[i].surface + "'");
        }
    }
}

TokenId Vocabulary::lookup(std::string_view surface) const
{
    if (auto it = m_index.find(std::string(surface)); it != m_index.end()) {
        return it->second;
    }
    return v() + static_cast<TokenId>(md5_mod(surface, m_buckets));
}

bool Vocabulary::contains(std::string_view surface) const
{
    return m_index.find(std::string(surface)) != m_index.end();
}

std::string Vocabulary::surface(TokenId index) const
{
    if (index < v()) {
        return m_words[index].surface;
    }
    return "‹hash:" + std::to_string(index - v()) + "›";
}

void Vocabulary::write(std::ostream& out) const
{
    out << "deepbow-vocab v=" << v() << " B=" << m_buckets << " ngram=" << m_ngram_order
        << " seg=" << m_segmenter_id << '\n';
    for (std::size_t i = 0; i < m_words.size(); ++i) {
        const auto& w = m_words[i];
        if (w.surface.find_first_of("\t\n") != std::string::npos) {
            throw Error(ErrorCode::config, "vocabulary surface contains tab or newline");
        }
        out << i << '\t' << w.surface << '\t' << w.frequency << '\n';
    }
}

Vocabulary Vocabulary::read(std::istream& in)
{
    std::string header;
    if (!std::getline(in, header)) {
        throw Error(ErrorCode::integrity, "vocabulary file is empty");
    }
    std::istringstream hs(header);
    std::string magic, v_field, b_field, n_field, s_field;
    hs >> magic >> v_field >> b_field >> n_field >> s_field;
    auto value_of = [&](const std::string& field, std::string_view key) {
        if (field.rfind(key, 0) != 0) {
            throw Error(ErrorCode::integrity, "malformed vocabulary header: " + header);
        }
        return field.substr(key.size());
    };
    if (magic != "deepbow-vocab") {
        throw Error(ErrorCode::integrity, "not a deepbow vocabulary file");
    }
    std::uint32_t v = 0, b = 0, n = 0;
    std::string seg;
    try {
        v = static_cast<std::uint32_t>(std::stoul(value_of(v_field, "v=")));
        b = static_cast<std::uint32_t>(std::stoul(value_of(b_field, "B=")));
        n = static_cast<std::uint32_t>(std::stoul(value_of(n_field, "ngram=")));
        seg = value_of(s_field, "seg=");
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::integrity, "malformed vocabulary header: " + header);
    }

    std::vector<VocabEntry> words;
    words.reserve(v);
    std::string line;
    while (words.size() < v && std::getline(in, line)) {
        auto t1 = line.find('\t');
        auto t2 = line.rfind('\t');
        if (t1 == std::string::npos || t1 == t2) {
            throw Error(ErrorCode::integrity, "malformed vocabulary line " + std::to_string(words.size() + 2));
        }
        auto index = std::stoul(line.substr(0, t1));
        if (index != words.size()) {
            throw Error(ErrorCode::integrity, "vocabulary indices out of order at line "
                                                  + std::to_string(words.size() + 2));
        }
        words.push_back({line.substr(t1 + 1, t2 - t1 - 1), std::stoull(line.substr(t2 + 1))});
    }
    if (words.size() != v) {
        throw Error(ErrorCode::integrity, "vocabulary file truncated: expected " + std::to_string(v)
                                              + " words, found " + std::to_string(words.size()));
    }
    return Vocabulary(std::move(words), b, n, seg);
}

void Vocabulary::save(const std::string& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    write(out);
}

Vocabulary Vocabulary::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    return read(in);
}

std::string Vocabulary::hash() const
{
    std::ostringstream out;
    write(out);
    return md5_hex(out.str());
}

bool operator==(const Vocabulary& a, const Vocabulary& b)
{
    return a.m_words == b.m_words && a.m_buckets == b.m_buckets && a.m_ngram_order == b.m_ngram_order
           && a.m_segmenter_id == b.m_segmenter_id;
}

Vocabulary build_vocabulary(std::span<const std::string> corpus, const VocabConfig& config)
{
    if (corpus.empty()) {
        throw Error(ErrorCode::build, "cannot build a vocabulary from an empty corpus");
    }
    if (config.v == 0 || config.buckets == 0) {
        throw Error(ErrorCode::config, "vocabulary needs v >= 1 and B >= 1");
    }
    const auto& segment = SegmenterRegistry::instance().get(config.segmenter);

    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& text : corpus) {
        for (auto& word : segment(text)) {
            ++counts[std::move(word)];
        }
    }
    if (counts.size() < config.v) {
        throw Error(ErrorCode::build, "vocabulary shortfall: requested v=" + std::to_string(config.v)
                                          + " but corpus has only " + std::to_string(counts.size())
                                          + " distinct words");
    }

    std::vector<VocabEntry> entries;
    entries.reserve(counts.size());
    for (auto& [surface, freq] : counts) {
        entries.push_back({surface, freq});
    }
    auto by_rank = [](const VocabEntry& a, const VocabEntry& b) {
        if (a.frequency != b.frequency) {
            return a.frequency > b.frequency;
        }
        return a.surface < b.surface;
    };
    std::partial_sort(entries.begin(), entries.begin() + config.v, entries.end(), by_rank);
    entries.resize(config.v);
    return Vocabulary(std::move(entries), config.buckets, config.ngram_order, config.segmenter);
}

TokenSequence segment_characters(std::string_view text, const Vocabulary& vocab)
{
    TokenSequence seq;
    seq.granularity = Granularity::character;
    for (auto& scalar : utf8_scalars(text)) {
        if ((scalar.size() == 1 && is_ascii_space(scalar[0])) || scalar == kIdeographicSpace) {
            continue;
        }
        seq.tokens.push_back(vocab.lookup(scalar));
        seq.surfaces.push_back(std::move(scalar));
    }
    return seq;
}

TokenSequence segment_words(std::string_view text, const Vocabulary& vocab, std::string_view segmenter_id)
{
    TokenSequence seq;
    seq.granularity = Granularity::word;
    for (auto& word : SegmenterRegistry::instance().get(segmenter_id)(text)) {
        if (word.empty()) {
            continue;
        }
        seq.tokens.push_back(vocab.lookup(word));
        seq.surfaces.push_back(std::move(word));
    }
    return seq;
}

TokenSequence segment_words(std::string_view text, const Vocabulary& vocab)
{
    return segment_words(text, vocab, vocab.segmenter_id());
}

TokenSequence extract_ngrams(const TokenSequence& words, std::uint32_t order, const Vocabulary& vocab)
{
    TokenSequence out;
    out.granularity = Granularity::word;
    const auto n = words.surfaces.size();
    for (std::uint32_t k = 2; k <= order; ++k) {
        for (std::size_t start = 0; start + k <= n; ++start) {
            std::string joined = words.surfaces[start];
            for (std::size_t j = 1; j < k; ++j) {
                joined.push_back(kNgramSeparator);
                joined += words.surfaces[start + j];
            }
            out.tokens.push_back(vocab.lookup(joined));
            out.surfaces.push_back(std::move(joined));
        }
    }
    return out;
}

}  // namespace deepbow
