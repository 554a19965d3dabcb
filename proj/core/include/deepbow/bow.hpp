#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "deepbow/tensor.hpp"
#include "deepbow/vocab.hpp"

namespace deepbow {

struct Posting {
    TokenId index;
    float weight;

    friend bool operator==(const Posting&, const Posting&) = default;
};

/// Index-sorted (token, weight) pairs; the stored and served representation.
struct SparseBoW {
    std::vector<Posting> entries;

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries.empty(); }
    [[nodiscard]] double weight_sum() const noexcept;

    /// Throws Error{contract} unless indices are strictly increasing and
    /// below `index_space`, and every weight is finite and positive.
    void validate(std::uint64_t index_space = std::numeric_limits<std::uint64_t>::max()) const;
    [[nodiscard]] bool is_valid(std::uint64_t index_space = std::numeric_limits<std::uint64_t>::max()) const noexcept;

    friend bool operator==(const SparseBoW&, const SparseBoW&) = default;
};

/// One weight per vocabulary index, each in [0, 1].
struct DenseBoW {
    RowVector weights;

    [[nodiscard]] Eigen::Index size() const noexcept { return weights.size(); }
};

/// Vocabulary projection heads of the synonym-expansion representation.
struct HeadParams {
    Matrix wc, bc;  // d×V, 1×V
    Matrix ww, bw;  // 2d×V, 1×V
    Matrix wg, bg;  // 2d×1, 1×1 (scalar gate per text)

    static HeadParams zeros(int d, std::uint32_t vocab_size);
    static HeadParams initialize(int d, std::uint32_t vocab_size, SplitMix64& rng);

    [[nodiscard]] int d() const noexcept { return static_cast<int>(wc.rows()); }
    [[nodiscard]] std::uint32_t vocab_size() const noexcept { return static_cast<std::uint32_t>(wc.cols()); }

    std::vector<NamedTensor> tensors(const std::string& prefix);
    std::vector<ConstNamedTensor> tensors(const std::string& prefix) const;
};

/// Term-weighting representation: softmax(h_c · H_w[i]) over the input's own
/// tokens, repeated tokens merged by summing.
SparseBoW term_weighting_bow(const RowVector& h_c, const Matrix& word_outputs, const TokenSequence& words);
/// Same merge/sort step with externally supplied position weights.
SparseBoW term_weighting_from_weights(const Eigen::VectorXd& weights, std::span<const TokenId> tokens);

struct SynonymExpansionTrace {
    RowVector h_c;
    RowVector summary;  // h̃_w
    RowVector joint;    // [h_c ‖ h̃_w]
    RowVector v_c;      // σ(h_c W_c + b_c) over the whole vocabulary
    std::vector<TokenId> input_set;  // sorted distinct input tokens
    Eigen::VectorXd v_w;             // σ([h_c‖h̃_w] W_w + b_w) at input_set only
    double gate = 0.0;
    DenseBoW dense;
};

/// V_c everywhere, blended with V_w through the gate at the input's own
/// word and n-gram tokens. Throws Error{config} on shape mismatch.
SynonymExpansionTrace synonym_expansion_forward(const RowVector& h_c, const RowVector& summary,
                                                const HeadParams& heads, std::span<const TokenId> input_tokens);
DenseBoW synonym_expansion_dense(const RowVector& h_c, const RowVector& summary, const HeadParams& heads,
                                 const TokenSequence& words);

/// Given dL/d(dense), accumulates head gradients and returns the gradients of
/// h_c and h̃_w through `d_h_c` / `d_summary` (added to, not overwritten).
void synonym_expansion_backward(const HeadParams& heads, const SynonymExpansionTrace& trace, const RowVector& d_dense,
                                HeadParams& grads, RowVector& d_h_c, RowVector& d_summary);

/// k largest positive weights (ties → smaller index), sorted by index.
SparseBoW truncate_topk(const DenseBoW& dense, std::size_t k);
/// Entries whose stored 32-bit weight is ≥ tau and > 0, sorted by index.
SparseBoW truncate_threshold(const DenseBoW& dense, double tau);
/// Uniform 1/n per position; repeated tokens get multiplicity/n.
SparseBoW avg_bow(const TokenSequence& words);
SparseBoW avg_bow(std::span<const TokenId> tokens);

}  // namespace deepbow
