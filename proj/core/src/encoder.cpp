#include "deepbow/encoder.hpp"

#include <cmath>
#include <string>

#include "deepbow/error.hpp"

namespace deepbow {

void EncoderConfig::validate() const
{
    if (vocab_size == 0 || d <= 0 || layers < 0 || heads <= 0 || ffn <= 0) {
        throw Error(ErrorCode::config, "encoder dimensions must be positive");
    }
    if (d % heads != 0) {
        throw Error(ErrorCode::config,
                    "heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(d) + ")");
    }
}

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, SplitMix64& rng)
{
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-bound, bound);
    }
    return m;
}

layers::AttentionWeights attention_weights(const EncoderLayerParams& p)
{
    return {p.wq, p.bq, p.wk, p.bk, p.wv, p.bv, p.wo, p.bo};
}

layers::AttentionGrads attention_grads(EncoderLayerParams& g)
{
    return {g.wq, g.bq, g.wk, g.bk, g.wv, g.bv, g.wo, g.bo};
}

template <typename Params, typename Out>
void enumerate(Params& p, const std::string& prefix, Out& out)
{
    out.push_back({prefix + "embedding", &p.embedding});
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const std::string lp = prefix + "layer" + std::to_string(l) + ".";
        out.push_back({lp + "ln1_gamma", &layer.ln1_gamma});
        out.push_back({lp + "ln1_beta", &layer.ln1_beta});
        out.push_back({lp + "wq", &layer.wq});
        out.push_back({lp + "bq", &layer.bq});
        out.push_back({lp + "wk", &layer.wk});
        out.push_back({lp + "bk", &layer.bk});
        out.push_back({lp + "wv", &layer.wv});
        out.push_back({lp + "bv", &layer.bv});
        out.push_back({lp + "wo", &layer.wo});
        out.push_back({lp + "bo", &layer.bo});
        out.push_back({lp + "ln2_gamma", &layer.ln2_gamma});
        out.push_back({lp + "ln2_beta", &layer.ln2_beta});
        out.push_back({lp + "w1", &layer.w1});
        out.push_back({lp + "b1", &layer.b1});
        out.push_back({lp + "w2", &layer.w2});
        out.push_back({lp + "b2", &layer.b2});
    }
    out.push_back({prefix + "final_ln_gamma", &p.final_ln_gamma});
    out.push_back({prefix + "final_ln_beta", &p.final_ln_beta});
    out.push_back({prefix + "pool_w", &p.pool_w});
    out.push_back({prefix + "pool_b", &p.pool_b});
    out.push_back({prefix + "agg_w", &p.agg_w});
    out.push_back({prefix + "agg_b", &p.agg_b});
}

}  // namespace

EncoderParams EncoderParams::zeros(const EncoderConfig& config)
{
    config.validate();
    const auto d = config.d;
    const auto f = config.ffn;
    EncoderParams p;
    p.config = config;
    p.embedding = Matrix::Zero(config.vocab_size, d);
    p.layers.resize(static_cast<std::size_t>(config.layers));
    for (auto& layer : p.layers) {
        layer.ln1_gamma = Matrix::Zero(1, d);
        layer.ln1_beta = Matrix::Zero(1, d);
        for (Matrix* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
            *w = Matrix::Zero(d, d);
        }
        for (Matrix* b : {&layer.bq, &layer.bk, &layer.bv, &layer.bo}) {
            *b = Matrix::Zero(1, d);
        }
        layer.ln2_gamma = Matrix::Zero(1, d);
        layer.ln2_beta = Matrix::Zero(1, d);
        layer.w1 = Matrix::Zero(d, f);
        layer.b1 = Matrix::Zero(1, f);
        layer.w2 = Matrix::Zero(f, d);
        layer.b2 = Matrix::Zero(1, d);
    }
    p.final_ln_gamma = Matrix::Zero(1, d);
    p.final_ln_beta = Matrix::Zero(1, d);
    p.pool_w = Matrix::Zero(d, d);
    p.pool_b = Matrix::Zero(1, d);
    p.agg_w = Matrix::Zero(static_cast<Eigen::Index>(config.layers) * d, d);
    p.agg_b = Matrix::Zero(1, d);
    return p;
}

EncoderParams EncoderParams::initialize(const EncoderConfig& config, SplitMix64& rng)
{
    EncoderParams p = zeros(config);
    const auto d = config.d;
    const double bound_d = 1.0 / std::sqrt(static_cast<double>(d));
    // Embeddings have no fan-in; unit range keeps them on the scale of the
    // sinusoidal position signal.
    p.embedding = uniform_matrix(config.vocab_size, d, 1.0, rng);
    for (auto& layer : p.layers) {
        layer.ln1_gamma.setOnes();
        layer.ln2_gamma.setOnes();
        for (Matrix* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
            *w = uniform_matrix(d, d, bound_d, rng);
        }
        layer.w1 = uniform_matrix(d, config.ffn, bound_d, rng);
        layer.w2 = uniform_matrix(config.ffn, d, 1.0 / std::sqrt(static_cast<double>(config.ffn)), rng);
    }
    p.final_ln_gamma.setOnes();
    p.pool_w = uniform_matrix(d, d, bound_d, rng);
    if (config.layers > 0) {
        p.agg_w = uniform_matrix(static_cast<Eigen::Index>(config.layers) * d, d,
                                 1.0 / std::sqrt(static_cast<double>(config.layers * d)), rng);
    }
    return p;
}

std::vector<NamedTensor> EncoderParams::tensors(const std::string& prefix)
{
    std::vector<NamedTensor> out;
    enumerate(*this, prefix, out);
    return out;
}

std::vector<ConstNamedTensor> EncoderParams::tensors(const std::string& prefix) const
{
    std::vector<ConstNamedTensor> out;
    enumerate(*this, prefix, out);
    return out;
}

EncoderTrace encode_traced(const EncoderParams& params, std::span<const TokenId> tokens)
{
    const auto& cfg = params.config;
    if (tokens.empty()) {
        throw Error(ErrorCode::input, "cannot encode an empty token sequence");
    }
    for (auto t : tokens) {
        if (t >= cfg.vocab_size) {
            throw Error(ErrorCode::input, "token index " + std::to_string(t) + " outside [0, "
                                              + std::to_string(cfg.vocab_size) + ")");
        }
    }

    const auto n = static_cast<Eigen::Index>(tokens.size());
    EncoderTrace trace;
    trace.params = &params;
    trace.tokens.assign(tokens.begin(), tokens.end());

    Matrix x = layers::positional_encoding(tokens.size(), static_cast<std::size_t>(cfg.d));
    for (Eigen::Index i = 0; i < n; ++i) {
        x.row(i) += params.embedding.row(tokens[static_cast<std::size_t>(i)]);
    }

    trace.layers.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& p = params.layers[l];
        auto& c = trace.layers[l];
        c.x_in = x;
        c.attn_in = layers::layer_norm_forward(x, p.ln1_gamma, p.ln1_beta, c.ln1);
        c.x_mid = x + layers::multi_head_attention(c.attn_in, attention_weights(p), cfg.heads, c.attn);
        c.ffn_in = layers::layer_norm_forward(c.x_mid, p.ln2_gamma, p.ln2_beta, c.ln2);
        c.ffn_pre = layers::linear(c.ffn_in, p.w1, p.b1);
        c.ffn_act = layers::gelu(c.ffn_pre);
        x = c.x_mid + layers::linear(c.ffn_act, p.w2, p.b2);
        if (l + 1 < params.layers.size()) {
            trace.layer_means.push_back(x.colwise().mean());
        }
    }
    trace.last_residual = x;
    trace.output.token_outputs
        = layers::layer_norm_forward(x, params.final_ln_gamma, params.final_ln_beta, trace.final_ln);
    if (!params.layers.empty()) {
        trace.layer_means.push_back(trace.output.token_outputs.colwise().mean());
    }

    const auto d = cfg.d;
    trace.concat.resize(static_cast<Eigen::Index>(params.layers.size()) * d);
    for (std::size_t l = 0; l < trace.layer_means.size(); ++l) {
        RowVector h = trace.layer_means[l] * params.pool_w + params.pool_b.row(0);
        trace.concat.segment(static_cast<Eigen::Index>(l) * d, d) = h;
        trace.output.per_layer_pooled.push_back(std::move(h));
    }
    trace.output.pooled = trace.concat * params.agg_w + params.agg_b.row(0);
    return trace;
}

EncodedText encode(const EncoderParams& params, std::span<const TokenId> tokens)
{
    return encode_traced(params, tokens).output;
}

void backward(const EncoderParams& params, const EncoderTrace& trace, const Matrix& d_token_outputs,
              const RowVector& d_pooled, EncoderParams& grads)
{
    const auto& cfg = params.config;
    const auto n = static_cast<Eigen::Index>(trace.tokens.size());
    const auto d = cfg.d;
    if (trace.params != &params || trace.layers.size() != params.layers.size()
        || trace.output.token_outputs.rows() != n) {
        throw Error(ErrorCode::internal, "encoder trace does not belong to these parameters");
    }
    const bool has_tok = d_token_outputs.size() != 0;
    const bool has_pool = d_pooled.size() != 0;
    if ((has_tok && (d_token_outputs.rows() != n || d_token_outputs.cols() != d))
        || (has_pool && d_pooled.size() != d)) {
        throw Error(ErrorCode::internal, "upstream gradient shape does not match the encoder trace");
    }

    const auto num_layers = params.layers.size();
    std::vector<RowVector> d_mean(num_layers, RowVector::Zero(d));
    if (has_pool && num_layers > 0) {
        grads.agg_w.noalias() += trace.concat.transpose() * d_pooled;
        grads.agg_b.row(0) += d_pooled;
        RowVector d_concat = d_pooled * params.agg_w.transpose();
        for (std::size_t l = 0; l < num_layers; ++l) {
            RowVector dh = d_concat.segment(static_cast<Eigen::Index>(l) * d, d);
            grads.pool_w.noalias() += trace.layer_means[l].transpose() * dh;
            grads.pool_b.row(0) += dh;
            d_mean[l] = dh * params.pool_w.transpose() / static_cast<double>(n);
        }
    } else if (has_pool) {
        grads.agg_b.row(0) += d_pooled;
    }

    Matrix d_out = has_tok ? d_token_outputs : Matrix::Zero(n, d);
    if (num_layers > 0) {
        d_out.rowwise() += d_mean[num_layers - 1];
    }
    Matrix dx = layers::layer_norm_backward(d_out, params.final_ln_gamma, trace.final_ln, grads.final_ln_gamma,
                                            grads.final_ln_beta);

    for (std::size_t li = num_layers; li-- > 0;) {
        if (li + 1 < num_layers) {
            dx.rowwise() += d_mean[li];
        }
        const auto& p = params.layers[li];
        auto& g = grads.layers[li];
        const auto& c = trace.layers[li];

        Matrix d_act = layers::linear_backward(dx, c.ffn_act, p.w2, g.w2, g.b2);
        Matrix d_pre = layers::gelu_backward(d_act, c.ffn_pre);
        Matrix d_ffn_in = layers::linear_backward(d_pre, c.ffn_in, p.w1, g.w1, g.b1);
        Matrix d_mid = dx + layers::layer_norm_backward(d_ffn_in, p.ln2_gamma, c.ln2, g.ln2_gamma, g.ln2_beta);

        auto ag = attention_grads(g);
        Matrix d_attn_in = layers::multi_head_attention_backward(d_mid, c.attn_in, attention_weights(p), cfg.heads,
                                                                 c.attn, ag);
        dx = d_mid + layers::layer_norm_backward(d_attn_in, p.ln1_gamma, c.ln1, g.ln1_gamma, g.ln1_beta);
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        grads.embedding.row(trace.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
    }
}

Eigen::VectorXd attention_pool(const RowVector& query, const Matrix& rows)
{
    if (rows.rows() == 0) {
        throw Error(ErrorCode::input, "attention pool over an empty sequence");
    }
    Eigen::VectorXd logits = rows * query.transpose();
    double mx = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - mx).exp().matrix();
    p /= p.sum();
    return p;
}

RowVector attention_pool_backward(const RowVector& query, const Matrix& rows, const Eigen::VectorXd& weights,
                                  const Eigen::VectorXd& d_weights, Matrix& d_rows, Eigen::VectorXd* d_logits_out)
{
    double inner = weights.dot(d_weights);
    Eigen::VectorXd d_logits = (weights.array() * (d_weights.array() - inner)).matrix();
    d_rows.noalias() += d_logits * query;
    if (d_logits_out != nullptr) {
        *d_logits_out = d_logits;
    }
    return d_logits.transpose() * rows;
}

RowVector weighted_word_summary(const Eigen::VectorXd& weights, const Matrix& rows)
{
    if (weights.size() != rows.rows() || weights.size() == 0) {
        throw Error(ErrorCode::input, "weights and rows disagree in length");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-6) {
        throw Error(ErrorCode::input, "summary weights must sum to 1");
    }
    return weights.transpose() * rows;
}

}  // namespace deepbow
