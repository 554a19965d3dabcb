#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepbow/layers.hpp"
#include "deepbow/tensor.hpp"
#include "deepbow/vocab.hpp"

namespace deepbow {

struct EncoderConfig {
    std::uint32_t vocab_size = 0;  // v + B
    int d = 64;
    int layers = 2;
    int heads = 4;
    int ffn = 256;

    void validate() const;
};

struct EncoderLayerParams {
    Matrix ln1_gamma, ln1_beta;
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix ln2_gamma, ln2_beta;
    Matrix w1, b1, w2, b2;
};

/// One pre-norm transformer stack plus the layer-aggregation projections.
///
/// The pooled representation averages every layer's token outputs, projects
/// each mean through the shared (W_m, b_m), concatenates the L projections and
/// maps them back to width d through (W_agg, b_agg).
struct EncoderParams {
    EncoderConfig config;
    Matrix embedding;  // (v+B) × d
    std::vector<EncoderLayerParams> layers;
    Matrix final_ln_gamma, final_ln_beta;
    Matrix pool_w, pool_b;  // d×d, 1×d
    Matrix agg_w, agg_b;    // (L·d)×d, 1×d

    /// Same shapes, every entry zero. Used as a gradient accumulator.
    static EncoderParams zeros(const EncoderConfig& config);
    /// Weights uniform in ±1/sqrt(fan_in), biases zero, layer-norm gains one.
    static EncoderParams initialize(const EncoderConfig& config, SplitMix64& rng);

    /// Every tensor in a fixed order; parameters and gradients enumerate alike.
    std::vector<NamedTensor> tensors(const std::string& prefix);
    std::vector<ConstNamedTensor> tensors(const std::string& prefix) const;
};

struct EncodedText {
    Matrix token_outputs;               // len × d, final layer (after final layer norm)
    RowVector pooled;                   // d
    std::vector<RowVector> per_layer_pooled;  // L entries of width d
};

struct EncoderLayerCache {
    Matrix x_in;
    layers::LayerNormCache ln1;
    Matrix attn_in;
    layers::AttentionCache attn;
    Matrix x_mid;
    layers::LayerNormCache ln2;
    Matrix ffn_in;
    Matrix ffn_pre;
    Matrix ffn_act;
};

/// Everything backward() needs from a forward pass.
struct EncoderTrace {
    const EncoderParams* params = nullptr;
    std::vector<TokenId> tokens;
    std::vector<EncoderLayerCache> layers;
    Matrix last_residual;  // input of the final layer norm
    layers::LayerNormCache final_ln;
    std::vector<RowVector> layer_means;  // mean over tokens of H^i
    RowVector concat;                    // [h̃^1 ‖ … ‖ h̃^L]
    EncodedText output;
};

/// Runs the stack. Throws Error{input} on an empty sequence or an index
/// outside [0, vocab_size).
EncodedText encode(const EncoderParams& params, std::span<const TokenId> tokens);
EncoderTrace encode_traced(const EncoderParams& params, std::span<const TokenId> tokens);

/// Accumulates parameter gradients given upstream gradients of the token
/// outputs (len × d, may be empty meaning zero) and of the pooled vector
/// (may be empty meaning zero). Throws Error{internal} if the trace was not
/// produced by `params` or the upstream shapes do not match it.
void backward(const EncoderParams& params, const EncoderTrace& trace, const Matrix& d_token_outputs,
              const RowVector& d_pooled, EncoderParams& grads);

/// p_i = softmax_i(query · rows_i), unscaled dot products.
Eigen::VectorXd attention_pool(const RowVector& query, const Matrix& rows);

/// Gradients of attention_pool: given dL/dp, returns dL/dquery and adds dL/drows
/// into `d_rows`. `d_logits_out`, if given, receives dL/dlogits.
RowVector attention_pool_backward(const RowVector& query, const Matrix& rows, const Eigen::VectorXd& weights,
                                  const Eigen::VectorXd& d_weights, Matrix& d_rows,
                                  Eigen::VectorXd* d_logits_out = nullptr);

/// Σ_i weights_i · rows_i. Throws Error{input} unless the weights sum to 1 within 1e-6.
RowVector weighted_word_summary(const Eigen::VectorXd& weights, const Matrix& rows);

}  // namespace deepbow
