#include "deepbow/layers.hpp"

#include <cmath>
#include <numbers>

namespace deepbow::layers {

Matrix layer_norm_forward(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormCache& cache)
{
    const auto n = x.rows();
    const auto d = static_cast<double>(x.cols());
    cache.normalized.resize(n, x.cols());
    cache.inv_std.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mean = x.row(i).sum() / d;
        auto centered = (x.row(i).array() - mean).matrix();
        double var = centered.squaredNorm() / d;
        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.inv_std(i) = inv;
        cache.normalized.row(i) = centered * inv;
    }
    Matrix y = cache.normalized.array().rowwise() * gamma.row(0).array();
    y.rowwise() += beta.row(0);
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gamma, const LayerNormCache& cache, Matrix& dgamma,
                           Matrix& dbeta)
{
    const auto n = dy.rows();
    const auto d = static_cast<double>(dy.cols());
    dgamma.row(0) += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
    dbeta.row(0) += dy.colwise().sum();

    Matrix dx(n, dy.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        RowVector dxhat = dy.row(i).cwiseProduct(gamma.row(0));
        double sum_dxhat = dxhat.sum();
        double sum_dxhat_xhat = dxhat.dot(cache.normalized.row(i));
        dx.row(i) = (cache.inv_std(i) / d)
                    * (d * dxhat.array() - sum_dxhat - cache.normalized.row(i).array() * sum_dxhat_xhat).matrix();
    }
    return dx;
}

Matrix gelu(const Matrix& x)
{
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Matrix gelu_backward(const Matrix& dy, const Matrix& x)
{
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix grad = x.unaryExpr([](double v) {
        double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
    });
    return dy.cwiseProduct(grad);
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b)
{
    Matrix y = x * w;
    y.rowwise() += b.row(0);
    return y;
}

Matrix linear_backward(const Matrix& dy, const Matrix& x, const Matrix& w, Matrix& dw, Matrix& db)
{
    dw.noalias() += x.transpose() * dy;
    db.row(0) += dy.colwise().sum();
    return dy * w.transpose();
}

void softmax_rows(Matrix& m)
{
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double mx = m.row(i).maxCoeff();
        m.row(i) = (m.row(i).array() - mx).exp().matrix();
        m.row(i) /= m.row(i).sum();
    }
}

Matrix multi_head_attention(const Matrix& x, const AttentionWeights& w, int heads, AttentionCache& cache)
{
    const auto n = x.rows();
    const auto d = x.cols();
    const auto dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.q = linear(x, w.wq, w.bq);
    cache.k = linear(x, w.wk, w.bk);
    cache.v = linear(x, w.wv, w.bv);
    cache.probs.assign(static_cast<std::size_t>(heads), Matrix());
    cache.context.resize(n, d);

    for (int h = 0; h < heads; ++h) {
        auto cols = Eigen::seqN(h * dh, dh);
        Matrix scores = (cache.q(Eigen::all, cols) * cache.k(Eigen::all, cols).transpose()) * scale;
        softmax_rows(scores);
        cache.context(Eigen::all, cols) = scores * cache.v(Eigen::all, cols);
        cache.probs[static_cast<std::size_t>(h)] = std::move(scores);
    }
    return linear(cache.context, w.wo, w.bo);
}

Matrix multi_head_attention_backward(const Matrix& dy, const Matrix& x, const AttentionWeights& w, int heads,
                                     const AttentionCache& cache, AttentionGrads& g)
{
    const auto n = x.rows();
    const auto d = x.cols();
    const auto dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dcontext = linear_backward(dy, cache.context, w.wo, g.wo, g.bo);
    Matrix dq(n, d), dk(n, d), dv(n, d);
    for (int h = 0; h < heads; ++h) {
        auto cols = Eigen::seqN(h * dh, dh);
        const Matrix& p = cache.probs[static_cast<std::size_t>(h)];
        Matrix dctx_h = dcontext(Eigen::all, cols);
        Matrix dp = dctx_h * cache.v(Eigen::all, cols).transpose();
        dv(Eigen::all, cols) = p.transpose() * dctx_h;
        Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
        Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
        dq(Eigen::all, cols) = ds * cache.k(Eigen::all, cols);
        dk(Eigen::all, cols) = ds.transpose() * cache.q(Eigen::all, cols);
    }
    Matrix dx = linear_backward(dq, x, w.wq, g.wq, g.bq);
    dx += linear_backward(dk, x, w.wk, g.wk, g.bk);
    dx += linear_backward(dv, x, w.wv, g.wv, g.bv);
    return dx;
}

Matrix positional_encoding(std::size_t len, std::size_t d)
{
    Matrix pe(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(d));
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; i < d; ++i) {
            double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
            double angle = static_cast<double>(pos) * freq;
            pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i))
                = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

}  // namespace deepbow::layers
