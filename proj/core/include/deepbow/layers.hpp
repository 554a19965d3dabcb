#pragma once

#include "deepbow/tensor.hpp"

// Building blocks of the transformer encoder with explicit backward passes.
// Backward functions accumulate (+=) into parameter gradients.
namespace deepbow::layers {

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    Matrix normalized;  // (x - mean) / std
    Eigen::VectorXd inv_std;
};

Matrix layer_norm_forward(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormCache& cache);
Matrix layer_norm_backward(const Matrix& dy, const Matrix& gamma, const LayerNormCache& cache, Matrix& dgamma,
                           Matrix& dbeta);

/// Exact (erf) GELU.
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& dy, const Matrix& x);

/// y = x W + b, b is 1×out.
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b);
/// Returns dx; accumulates dw and db.
Matrix linear_backward(const Matrix& dy, const Matrix& x, const Matrix& w, Matrix& dw, Matrix& db);

struct AttentionWeights {
    const Matrix& wq;
    const Matrix& bq;
    const Matrix& wk;
    const Matrix& bk;
    const Matrix& wv;
    const Matrix& bv;
    const Matrix& wo;
    const Matrix& bo;
};

struct AttentionGrads {
    Matrix& wq;
    Matrix& bq;
    Matrix& wk;
    Matrix& bk;
    Matrix& wv;
    Matrix& bv;
    Matrix& wo;
    Matrix& bo;
};

struct AttentionCache {
    Matrix q, k, v;
    std::vector<Matrix> probs;  // one n×n row-softmax per head
    Matrix context;             // concatenated heads, n×d
};

Matrix multi_head_attention(const Matrix& x, const AttentionWeights& w, int heads, AttentionCache& cache);
Matrix multi_head_attention_backward(const Matrix& dy, const Matrix& x, const AttentionWeights& w, int heads,
                                     const AttentionCache& cache, AttentionGrads& g);

/// Row-wise softmax, max-shifted.
void softmax_rows(Matrix& m);

/// Sinusoidal positional encodings for positions [0, len).
Matrix positional_encoding(std::size_t len, std::size_t d);

}  // namespace deepbow::layers
