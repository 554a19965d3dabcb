#include "deepbow/model.hpp"

#include <sstream>

#include "deepbow/error.hpp"

namespace deepbow {

void ModelConfig::validate() const
{
    if (d <= 0 || layers < 0 || heads <= 0 || ffn <= 0 || max_len == 0) {
        throw Error(ErrorCode::config, "model dimensions must be positive");
    }
    if (d % heads != 0) {
        throw Error(ErrorCode::config, "heads must divide d");
    }
    if (!use_char_encoder && !use_word_encoder) {
        throw Error(ErrorCode::config, "at least one of the character and word encoders must be enabled");
    }
    if (!use_char_encoder && layers == 0) {
        throw Error(ErrorCode::config, "without the character encoder the word encoder needs >= 1 layer");
    }
}

EncoderConfig DeepBowModel::char_encoder_config() const
{
    return {vocab_size, config.d, config.use_char_encoder ? config.layers : 0, config.heads, config.ffn};
}

EncoderConfig DeepBowModel::word_encoder_config() const
{
    return {vocab_size, config.d, config.use_word_encoder ? config.layers : 0, config.heads, config.ffn};
}

DeepBowModel DeepBowModel::initialize(const ModelConfig& config, const Vocabulary& vocab)
{
    config.validate();
    DeepBowModel m;
    m.config = config;
    m.vocab_size = vocab.size();
    m.vocab_hash = vocab.hash();
    SplitMix64 rng(config.seed);
    m.char_encoder = EncoderParams::initialize(m.char_encoder_config(), rng);
    m.word_encoder = EncoderParams::initialize(m.word_encoder_config(), rng);
    m.heads = HeadParams::initialize(config.d, m.vocab_size, rng);
    return m;
}

DeepBowModel DeepBowModel::zeros_like(const DeepBowModel& model)
{
    DeepBowModel m;
    m.config = model.config;
    m.vocab_size = model.vocab_size;
    m.vocab_hash = model.vocab_hash;
    m.char_encoder = EncoderParams::zeros(model.char_encoder.config);
    m.word_encoder = EncoderParams::zeros(model.word_encoder.config);
    m.heads = HeadParams::zeros(model.config.d, model.vocab_size);
    return m;
}

std::vector<NamedTensor> DeepBowModel::tensors()
{
    auto out = char_encoder.tensors("char.");
    for (auto& t : word_encoder.tensors("word.")) {
        out.push_back(std::move(t));
    }
    for (auto& t : heads.tensors("head.")) {
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<ConstNamedTensor> DeepBowModel::tensors() const
{
    auto out = char_encoder.tensors("char.");
    for (auto& t : word_encoder.tensors("word.")) {
        out.push_back(std::move(t));
    }
    for (auto& t : heads.tensors("head.")) {
        out.push_back(std::move(t));
    }
    return out;
}

std::size_t DeepBowModel::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& t : tensors()) {
        n += static_cast<std::size_t>(t.value->size());
    }
    return n;
}

TextFeatures featurize(std::string_view text, const Vocabulary& vocab, std::size_t max_len)
{
    TextFeatures f;
    f.chars = segment_characters(text, vocab);
    f.words = segment_words(text, vocab);
    auto cut = [max_len](TokenSequence& s) {
        if (s.tokens.size() > max_len) {
            s.tokens.resize(max_len);
            s.surfaces.resize(max_len);
        }
    };
    cut(f.chars);
    cut(f.words);
    f.unigram_count = f.words.size();
    if (vocab.ngram_order() >= 2) {
        auto grams = extract_ngrams(f.words, vocab.ngram_order(), vocab);
        for (std::size_t i = 0; i < grams.size() && f.words.size() < max_len; ++i) {
            f.words.tokens.push_back(grams.tokens[i]);
            f.words.surfaces.push_back(std::move(grams.surfaces[i]));
        }
    }
    return f;
}

TextTrace forward_text(const DeepBowModel& model, const TextFeatures& features, bool with_expansion)
{
    if (features.words.empty() || (model.config.use_char_encoder && features.chars.empty())) {
        throw Error(ErrorCode::input, "text has no tokens to encode");
    }
    TextTrace t;
    t.word_tokens = features.words.tokens;
    t.word_trace = encode_traced(model.word_encoder, features.words.tokens);
    if (model.config.use_char_encoder) {
        t.char_trace = encode_traced(model.char_encoder, features.chars.tokens);
        t.h_c = t.char_trace->output.pooled;
    } else {
        t.h_c = t.word_trace.output.pooled;
    }
    const Matrix& hw = t.word_trace.output.token_outputs;
    t.pool_weights = attention_pool(t.h_c, hw);
    t.summary = weighted_word_summary(t.pool_weights, hw);
    if (with_expansion) {
        t.expansion = synonym_expansion_forward(t.h_c, t.summary, model.heads, features.words.tokens);
    }
    return t;
}

void backward_text(const DeepBowModel& model, const TextTrace& t, const Eigen::VectorXd& d_pool_weights,
                   const RowVector& d_dense, DeepBowModel& grads)
{
    const auto d = model.config.d;
    const Matrix& hw = t.word_trace.output.token_outputs;
    RowVector d_h_c = RowVector::Zero(d);
    RowVector d_summary = RowVector::Zero(d);
    Matrix d_hw = Matrix::Zero(hw.rows(), hw.cols());

    if (d_dense.size() != 0) {
        if (!t.expansion) {
            throw Error(ErrorCode::internal, "expansion gradient given but the forward pass skipped the head");
        }
        synonym_expansion_backward(model.heads, *t.expansion, d_dense, grads.heads, d_h_c, d_summary);
    }

    // h̃_w = Σ p_i H_w[i]
    Eigen::VectorXd d_weights = hw * d_summary.transpose();
    if (d_pool_weights.size() != 0) {
        if (d_pool_weights.size() != d_weights.size()) {
            throw Error(ErrorCode::internal, "term-weight gradient length mismatch");
        }
        d_weights += d_pool_weights;
    }
    d_hw.noalias() += t.pool_weights * d_summary;
    d_h_c += attention_pool_backward(t.h_c, hw, t.pool_weights, d_weights, d_hw);

    if (model.config.use_char_encoder) {
        backward(model.word_encoder, t.word_trace, d_hw, RowVector(), grads.word_encoder);
        backward(model.char_encoder, *t.char_trace, Matrix(), d_h_c, grads.char_encoder);
    } else {
        backward(model.word_encoder, t.word_trace, d_hw, d_h_c, grads.word_encoder);
    }
}

std::string_view to_string(Side side) noexcept
{
    return side == Side::query ? "query" : "product";
}

Side parse_side(std::string_view text)
{
    if (text == "query") {
        return Side::query;
    }
    if (text == "product") {
        return Side::product;
    }
    throw Error(ErrorCode::config, "unknown side '" + std::string(text) + "' (expected query|product)");
}

SparseBoW TruncationPolicy::apply(const DenseBoW& dense) const
{
    switch (kind) {
    case Kind::topk: return truncate_topk(dense, k);
    case Kind::threshold: return truncate_threshold(dense, tau);
    case Kind::none: break;
    }
    return truncate_threshold(dense, 0.0);
}

std::string TruncationPolicy::describe() const
{
    std::ostringstream out;
    switch (kind) {
    case Kind::topk: out << "topk:" << k; break;
    case Kind::threshold: out << "threshold:" << tau; break;
    case Kind::none: out << "none"; break;
    }
    return out.str();
}

std::optional<DenseBoW> expand(const DeepBowModel& model, const TextFeatures& features)
{
    if (features.empty()) {
        return std::nullopt;
    }
    auto t = forward_text(model, features, true);
    return std::move(t.expansion->dense);
}

std::optional<SparseBoW> represent(const DeepBowModel& model, const TextFeatures& features, Side side,
                                   ScoreMode mode, const TruncationPolicy& policy)
{
    if (features.empty()) {
        return std::nullopt;
    }
    if (side == Side::query && mode == ScoreMode::q_weight) {
        auto t = forward_text(model, features, false);
        return term_weighting_from_weights(t.pool_weights, t.word_tokens);
    }
    auto t = forward_text(model, features, true);
    return policy.apply(t.expansion->dense);
}

std::optional<SparseBoW> represent(const DeepBowModel& model, const Vocabulary& vocab, std::string_view text,
                                   Side side, ScoreMode mode, const TruncationPolicy& policy)
{
    return represent(model, featurize(text, vocab, model.config.max_len), side, mode, policy);
}

}  // namespace deepbow
