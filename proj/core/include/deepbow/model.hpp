#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepbow/bow.hpp"
#include "deepbow/encoder.hpp"
#include "deepbow/scoring.hpp"
#include "deepbow/vocab.hpp"

namespace deepbow {

struct ModelConfig {
    int d = 64;
    int layers = 2;
    int heads = 4;
    int ffn = 256;
    std::size_t max_len = 128;
    bool use_char_encoder = true;
    bool use_word_encoder = true;
    std::uint64_t seed = 42;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Character encoder, word encoder and the vocabulary heads.
///
/// With the character encoder removed, h_c is taken from the word encoder's
/// pooled output. With the word encoder removed, its stack has zero layers
/// and H_w is the layer-normalized embedding plus position signal.
struct DeepBowModel {
    ModelConfig config;
    std::uint32_t vocab_size = 0;
    std::string vocab_hash;
    EncoderParams char_encoder;
    EncoderParams word_encoder;
    HeadParams heads;

    static DeepBowModel initialize(const ModelConfig& config, const Vocabulary& vocab);
    /// Same architecture, every parameter zero.
    static DeepBowModel zeros_like(const DeepBowModel& model);

    std::vector<NamedTensor> tensors();
    std::vector<ConstNamedTensor> tensors() const;
    [[nodiscard]] std::size_t parameter_count() const;

    [[nodiscard]] EncoderConfig char_encoder_config() const;
    [[nodiscard]] EncoderConfig word_encoder_config() const;
};

/// Both token streams of one text. `words` holds the unigrams followed by
/// their n-gram hashing tokens.
struct TextFeatures {
    TokenSequence chars;
    TokenSequence words;
    std::size_t unigram_count = 0;

    [[nodiscard]] bool empty() const noexcept { return chars.empty() || words.empty(); }
    [[nodiscard]] std::size_t token_count() const noexcept { return chars.size() + words.size(); }
    [[nodiscard]] std::span<const TokenId> unigrams() const noexcept
    {
        return std::span<const TokenId>(words.tokens).first(unigram_count);
    }
};

/// Segments and resolves a text; each stream is cut to `max_len` tokens.
TextFeatures featurize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

struct TextTrace {
    std::optional<EncoderTrace> char_trace;
    EncoderTrace word_trace;
    RowVector h_c;
    Eigen::VectorXd pool_weights;  // term weights p_i over `words`
    RowVector summary;             // h̃_w
    std::optional<SynonymExpansionTrace> expansion;
    std::vector<TokenId> word_tokens;
};

/// Forward pass for one text; the expansion head runs only when requested.
TextTrace forward_text(const DeepBowModel& model, const TextFeatures& features, bool with_expansion);

/// Accumulates gradients into `grads` given dL/dp (may be empty) and
/// dL/d(dense expansion) (may be empty).
void backward_text(const DeepBowModel& model, const TextTrace& trace, const Eigen::VectorXd& d_pool_weights,
                   const RowVector& d_dense, DeepBowModel& grads);

enum class Side { query, product };
std::string_view to_string(Side side) noexcept;
Side parse_side(std::string_view text);

/// How a dense expansion becomes a stored sparse representation.
struct TruncationPolicy {
    enum class Kind { none, topk, threshold };
    Kind kind = Kind::none;
    std::size_t k = 128;
    double tau = 0.4;

    static TruncationPolicy none() { return {}; }
    static TruncationPolicy top_k(std::size_t k) { return {Kind::topk, k, 0.0}; }
    static TruncationPolicy threshold(double tau) { return {Kind::threshold, 0, tau}; }

    [[nodiscard]] SparseBoW apply(const DenseBoW& dense) const;
    [[nodiscard]] std::string describe() const;
    friend bool operator==(const TruncationPolicy&, const TruncationPolicy&) = default;
};

/// Serving representation of a text. Queries in q_weight mode get the
/// term-weighting form (never truncated); everything else gets the truncated
/// synonym expansion. Returns nullopt if the text segments to nothing.
std::optional<SparseBoW> represent(const DeepBowModel& model, const Vocabulary& vocab, std::string_view text,
                                   Side side, ScoreMode mode, const TruncationPolicy& policy);
std::optional<SparseBoW> represent(const DeepBowModel& model, const TextFeatures& features, Side side,
                                   ScoreMode mode, const TruncationPolicy& policy);

/// Full-width expansion of a text; nullopt if the text segments to nothing.
std::optional<DenseBoW> expand(const DeepBowModel& model, const TextFeatures& features);

}  // namespace deepbow
