#include "deepbow/bow.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "deepbow/encoder.hpp"
#include "deepbow/error.hpp"

namespace deepbow {

double SparseBoW::weight_sum() const noexcept
{
    double sum = 0.0;
    for (const auto& e : entries) {
        sum += e.weight;
    }
    return sum;
}

bool SparseBoW::is_valid(std::uint64_t index_space) const noexcept
{
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.index >= index_space || !std::isfinite(e.weight) || !(e.weight > 0.0F)) {
            return false;
        }
        if (i > 0 && entries[i - 1].index >= e.index) {
            return false;
        }
    }
    return true;
}

void SparseBoW::validate(std::uint64_t index_space) const
{
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.index >= index_space) {
            throw Error(ErrorCode::contract, "posting " + std::to_string(i) + " index " + std::to_string(e.index)
                                                 + " outside index space");
        }
        if (!std::isfinite(e.weight) || !(e.weight > 0.0F)) {
            throw Error(ErrorCode::contract, "posting " + std::to_string(i) + " has non-positive weight");
        }
        if (i > 0 && entries[i - 1].index >= e.index) {
            throw Error(ErrorCode::contract, "postings not strictly index-sorted at position " + std::to_string(i));
        }
    }
}

// ---------------------------------------------------------------------------
// heads

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, SplitMix64& rng)
{
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-bound, bound);
    }
    return m;
}

template <typename Heads, typename Out>
void enumerate_heads(Heads& h, const std::string& prefix, Out& out)
{
    out.push_back({prefix + "wc", &h.wc});
    out.push_back({prefix + "bc", &h.bc});
    out.push_back({prefix + "ww", &h.ww});
    out.push_back({prefix + "bw", &h.bw});
    out.push_back({prefix + "wg", &h.wg});
    out.push_back({prefix + "bg", &h.bg});
}

}  // namespace

HeadParams HeadParams::zeros(int d, std::uint32_t vocab_size)
{
    HeadParams h;
    h.wc = Matrix::Zero(d, vocab_size);
    h.bc = Matrix::Zero(1, vocab_size);
    h.ww = Matrix::Zero(2 * d, vocab_size);
    h.bw = Matrix::Zero(1, vocab_size);
    h.wg = Matrix::Zero(2 * d, 1);
    h.bg = Matrix::Zero(1, 1);
    return h;
}

HeadParams HeadParams::initialize(int d, std::uint32_t vocab_size, SplitMix64& rng)
{
    HeadParams h = zeros(d, vocab_size);
    h.wc = uniform_matrix(d, vocab_size, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    h.ww = uniform_matrix(2 * d, vocab_size, 1.0 / std::sqrt(2.0 * d), rng);
    h.wg = uniform_matrix(2 * d, 1, 1.0 / std::sqrt(2.0 * d), rng);
    // start V_c near an expansion of a handful of terms instead of half the vocabulary
    const double active = std::min(8.0, 0.5 * static_cast<double>(vocab_size));
    h.bc.setConstant(std::log(active / (static_cast<double>(vocab_size) - active)));
    return h;
}

std::vector<NamedTensor> HeadParams::tensors(const std::string& prefix)
{
    std::vector<NamedTensor> out;
    enumerate_heads(*this, prefix, out);
    return out;
}

std::vector<ConstNamedTensor> HeadParams::tensors(const std::string& prefix) const
{
    std::vector<ConstNamedTensor> out;
    enumerate_heads(*this, prefix, out);
    return out;
}

// ---------------------------------------------------------------------------
// term weighting

SparseBoW term_weighting_from_weights(const Eigen::VectorXd& weights, std::span<const TokenId> tokens)
{
    if (tokens.empty()) {
        throw Error(ErrorCode::input, "term weighting needs at least one word");
    }
    if (static_cast<std::size_t>(weights.size()) != tokens.size()) {
        throw Error(ErrorCode::input, "weights and tokens disagree in length");
    }
    std::map<TokenId, double> merged;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        merged[tokens[i]] += weights(static_cast<Eigen::Index>(i));
    }
    SparseBoW out;
    out.entries.reserve(merged.size());
    for (auto [index, w] : merged) {
        auto stored = static_cast<float>(w);
        if (stored > 0.0F) {
            out.entries.push_back({index, stored});
        }
    }
    return out;
}

SparseBoW term_weighting_bow(const RowVector& h_c, const Matrix& word_outputs, const TokenSequence& words)
{
    if (words.empty()) {
        throw Error(ErrorCode::input, "term weighting needs at least one word");
    }
    if (word_outputs.rows() != static_cast<Eigen::Index>(words.size())) {
        throw Error(ErrorCode::input, "word outputs and word sequence disagree in length");
    }
    return term_weighting_from_weights(attention_pool(h_c, word_outputs), words.tokens);
}

// ---------------------------------------------------------------------------
// synonym expansion

SynonymExpansionTrace synonym_expansion_forward(const RowVector& h_c, const RowVector& summary,
                                                const HeadParams& heads, std::span<const TokenId> input_tokens)
{
    const auto d = heads.d();
    const auto vocab = heads.vocab_size();
    if (h_c.size() != d || summary.size() != d || heads.ww.rows() != 2 * d || heads.ww.cols() != vocab
        || heads.bc.cols() != vocab || heads.bw.cols() != vocab || heads.wg.rows() != 2 * d || heads.wg.cols() != 1
        || heads.bg.size() != 1) {
        throw Error(ErrorCode::config, "synonym-expansion head shapes do not match encoder width");
    }

    SynonymExpansionTrace t;
    t.h_c = h_c;
    t.summary = summary;
    t.joint.resize(2 * d);
    t.joint << h_c, summary;

    RowVector pre_c = h_c * heads.wc + heads.bc.row(0);
    t.v_c = pre_c.unaryExpr([](double x) { return sigmoid(x); });
    t.gate = sigmoid((t.joint * heads.wg)(0, 0) + heads.bg(0, 0));

    t.input_set.assign(input_tokens.begin(), input_tokens.end());
    std::sort(t.input_set.begin(), t.input_set.end());
    t.input_set.erase(std::unique(t.input_set.begin(), t.input_set.end()), t.input_set.end());
    for (auto tok : t.input_set) {
        if (tok >= vocab) {
            throw Error(ErrorCode::input, "input token outside the head's vocabulary");
        }
    }

    t.dense.weights = t.v_c;
    t.v_w.resize(static_cast<Eigen::Index>(t.input_set.size()));
    for (std::size_t k = 0; k < t.input_set.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(t.input_set[k]);
        double vw = sigmoid(t.joint.dot(heads.ww.col(col)) + heads.bw(0, col));
        t.v_w(static_cast<Eigen::Index>(k)) = vw;
        t.dense.weights(col) = t.gate * t.v_c(col) + (1.0 - t.gate) * vw;
    }
    return t;
}

DenseBoW synonym_expansion_dense(const RowVector& h_c, const RowVector& summary, const HeadParams& heads,
                                 const TokenSequence& words)
{
    return synonym_expansion_forward(h_c, summary, heads, words.tokens).dense;
}

void synonym_expansion_backward(const HeadParams& heads, const SynonymExpansionTrace& t, const RowVector& d_dense,
                                HeadParams& grads, RowVector& d_h_c, RowVector& d_summary)
{
    const auto d = heads.d();
    if (d_dense.size() != t.dense.size()) {
        throw Error(ErrorCode::internal, "dense gradient length does not match the head's vocabulary");
    }

    // V_c receives the full gradient off the input set, a gated share on it.
    RowVector d_vc = d_dense;
    double d_gate = 0.0;
    Eigen::VectorXd d_pre_w(t.v_w.size());
    for (std::size_t k = 0; k < t.input_set.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(t.input_set[k]);
        const auto kk = static_cast<Eigen::Index>(k);
        const double g = d_dense(col);
        d_vc(col) = t.gate * g;
        const double vw = t.v_w(kk);
        d_pre_w(kk) = (1.0 - t.gate) * g * vw * (1.0 - vw);
        d_gate += g * (t.v_c(col) - vw);
    }

    RowVector d_pre_c = d_vc.array() * t.v_c.array() * (1.0 - t.v_c.array());
    grads.wc.noalias() += t.h_c.transpose() * d_pre_c;
    grads.bc.row(0) += d_pre_c;
    d_h_c.noalias() += d_pre_c * heads.wc.transpose();

    RowVector d_joint = RowVector::Zero(2 * d);
    for (std::size_t k = 0; k < t.input_set.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(t.input_set[k]);
        const double dp = d_pre_w(static_cast<Eigen::Index>(k));
        grads.ww.col(col) += t.joint.transpose() * dp;
        grads.bw(0, col) += dp;
        d_joint += dp * heads.ww.col(col).transpose();
    }

    const double d_pre_g = d_gate * t.gate * (1.0 - t.gate);
    grads.wg.col(0) += t.joint.transpose() * d_pre_g;
    grads.bg(0, 0) += d_pre_g;
    d_joint += d_pre_g * heads.wg.col(0).transpose();

    d_h_c += d_joint.head(d);
    d_summary += d_joint.tail(d);
}

// ---------------------------------------------------------------------------
// truncation

SparseBoW truncate_topk(const DenseBoW& dense, std::size_t k)
{
    if (k == 0) {
        throw Error(ErrorCode::input, "top-k truncation needs k >= 1");
    }
    std::vector<Posting> candidates;
    for (Eigen::Index i = 0; i < dense.weights.size(); ++i) {
        auto w = static_cast<float>(dense.weights(i));
        if (w > 0.0F) {
            candidates.push_back({static_cast<TokenId>(i), w});
        }
    }
    if (candidates.size() > k) {
        auto by_weight = [](const Posting& a, const Posting& b) {
            return a.weight != b.weight ? a.weight > b.weight : a.index < b.index;
        };
        std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k) - 1,
                         candidates.end(), by_weight);
        candidates.resize(k);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Posting& a, const Posting& b) { return a.index < b.index; });
    return SparseBoW{std::move(candidates)};
}

SparseBoW truncate_threshold(const DenseBoW& dense, double tau)
{
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw Error(ErrorCode::input, "threshold must lie in [0, 1]");
    }
    SparseBoW out;
    for (Eigen::Index i = 0; i < dense.weights.size(); ++i) {
        auto w = static_cast<float>(dense.weights(i));
        if (w > 0.0F && static_cast<double>(w) >= tau) {
            out.entries.push_back({static_cast<TokenId>(i), w});
        }
    }
    return out;
}

SparseBoW avg_bow(std::span<const TokenId> tokens)
{
    if (tokens.empty()) {
        throw Error(ErrorCode::input, "average bag-of-words needs at least one word");
    }
    std::map<TokenId, std::size_t> counts;
    for (auto t : tokens) {
        ++counts[t];
    }
    const auto n = static_cast<double>(tokens.size());
    SparseBoW out;
    out.entries.reserve(counts.size());
    for (auto [index, c] : counts) {
        out.entries.push_back({index, static_cast<float>(static_cast<double>(c) / n)});
    }
    return out;
}

SparseBoW avg_bow(const TokenSequence& words)
{
    return avg_bow(words.tokens);
}

}  // namespace deepbow
