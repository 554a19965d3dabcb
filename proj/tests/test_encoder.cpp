#include <gtest/gtest.h>

#include <cmath>

#include "deepbow/encoder.hpp"
#include "deepbow/error.hpp"
#include "oracles.hpp"

using namespace deepbow;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, SplitMix64& rng)
{
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-1.0, 1.0);
    }
    return m;
}

EncoderConfig small_encoder(int layers = 2)
{
    return {30, 8, layers, 2, 16};
}

}  // namespace

TEST(Layers, GeluMatchesErfForm)
{
    Matrix x(1, 3);
    x << -1.0, 0.0, 1.0;
    auto y = layers::gelu(x);
    EXPECT_NEAR(y(0, 0), -0.15865525393145707, 1e-12);
    EXPECT_NEAR(y(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(y(0, 2), 0.8413447460685429, 1e-12);
}

TEST(Layers, LayerNormNormalizesRows)
{
    SplitMix64 rng(3);
    Matrix x = random_matrix(4, 6, rng) * 5.0;
    Matrix gamma = Matrix::Ones(1, 6);
    Matrix beta = Matrix::Zero(1, 6);
    layers::LayerNormCache cache;
    auto y = layers::layer_norm_forward(x, gamma, beta, cache);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
        EXPECT_NEAR(y.row(r).squaredNorm() / 6.0, 1.0, 1e-5);
    }
}

TEST(Layers, PositionalEncodingSinusoids)
{
    auto pe = layers::positional_encoding(3, 4);
    EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
    EXPECT_NEAR(pe(1, 0), std::sin(1.0), 1e-15);
    EXPECT_NEAR(pe(2, 2), std::sin(2.0 / 100.0), 1e-15);
    EXPECT_NEAR(pe(2, 3), std::cos(2.0 / 100.0), 1e-15);
}

TEST(Layers, SoftmaxRowsSumToOneAndSurviveLargeLogits)
{
    Matrix m(2, 3);
    m << 1000.0, 1000.0, 999.0, -5.0, 0.0, 5.0;
    layers::softmax_rows(m);
    EXPECT_TRUE(all_finite(m));
    EXPECT_NEAR(m.row(0).sum(), 1.0, 1e-15);
    EXPECT_NEAR(m(0, 0), m(0, 1), 1e-15);
}

TEST(Encoder, ShapesAndPooling)
{
    SplitMix64 rng(1);
    auto params = EncoderParams::initialize(small_encoder(), rng);
    std::vector<TokenId> tokens = {1, 5, 7, 5};
    auto out = encode(params, tokens);
    EXPECT_EQ(out.token_outputs.rows(), 4);
    EXPECT_EQ(out.token_outputs.cols(), 8);
    EXPECT_EQ(out.pooled.size(), 8);
    EXPECT_EQ(out.per_layer_pooled.size(), 2u);
    EXPECT_TRUE(all_finite(out.token_outputs));
}

TEST(Encoder, RejectsEmptyAndOutOfRangeInput)
{
    SplitMix64 rng(1);
    auto params = EncoderParams::initialize(small_encoder(), rng);
    std::vector<TokenId> none;
    std::vector<TokenId> bad = {30};
    EXPECT_THROW(encode(params, none), Error);
    EXPECT_THROW(encode(params, bad), Error);
}

TEST(Encoder, ZeroLayerStackStillEncodes)
{
    SplitMix64 rng(1);
    auto params = EncoderParams::initialize(small_encoder(0), rng);
    std::vector<TokenId> tokens = {2, 3};
    auto out = encode(params, tokens);
    EXPECT_EQ(out.token_outputs.rows(), 2);
    EXPECT_EQ(out.pooled.size(), 8);
}

TEST(Encoder, InitializationIsSeedDeterministic)
{
    SplitMix64 a(99);
    SplitMix64 b(99);
    auto pa = EncoderParams::initialize(small_encoder(), a);
    auto pb = EncoderParams::initialize(small_encoder(), b);
    EXPECT_EQ(pa.embedding, pb.embedding);
    EXPECT_EQ(pa.layers[1].w2, pb.layers[1].w2);
}

// L = <R, token_outputs> + <r, pooled> for fixed random R, r.
TEST(Encoder, BackwardMatchesFiniteDifferences)
{
    for (int depth : {0, 1, 2}) {
        SplitMix64 rng(5 + depth);
        auto params = EncoderParams::initialize(small_encoder(depth), rng);
        std::vector<TokenId> tokens = {3, 9, 3, 17, 28};
        Matrix R = random_matrix(5, 8, rng);
        RowVector r = random_matrix(1, 8, rng);
        auto loss = [&] {
            auto out = encode(params, tokens);
            return (out.token_outputs.array() * R.array()).sum() + out.pooled.dot(r);
        };
        auto grads = EncoderParams::zeros(params.config);
        backward(params, encode_traced(params, tokens), R, r, grads);

        auto p = params.tensors("");
        auto g = grads.tensors("");
        ASSERT_EQ(p.size(), g.size());
        for (std::size_t t = 0; t < p.size(); ++t) {
            const auto n = p[t].value->size();
            if (n == 0) {
                continue;
            }
            for (int s = 0; s < 6; ++s) {
                const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
                const double numeric = oracle::central_difference(p[t].value->data() + i, 1e-5, loss);
                // key biases have an exactly zero gradient; the floor keeps round-off from counting
                EXPECT_LE(oracle::relative_error(g[t].value->data()[i], numeric, 1e-4), 1e-5)
                    << p[t].name << "[" << i << "] depth " << depth;
            }
        }
    }
}

TEST(AttentionPool, WeightsFormADistribution)
{
    SplitMix64 rng(8);
    RowVector q = random_matrix(1, 8, rng) * 10.0;
    Matrix rows = random_matrix(6, 8, rng) * 10.0;
    auto w = attention_pool(q, rows);
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_GE(w.minCoeff(), 0.0);
}

TEST(AttentionPool, BackwardMatchesFiniteDifferences)
{
    SplitMix64 rng(9);
    RowVector q = random_matrix(1, 4, rng);
    Matrix rows = random_matrix(3, 4, rng);
    Eigen::VectorXd c(3);
    c << 0.3, -1.2, 0.8;
    auto loss = [&] { return attention_pool(q, rows).dot(c); };
    Matrix d_rows = Matrix::Zero(3, 4);
    auto d_q = attention_pool_backward(q, rows, attention_pool(q, rows), c, d_rows);
    for (Eigen::Index i = 0; i < 4; ++i) {
        EXPECT_LE(oracle::relative_error(d_q(i), oracle::central_difference(&q(i), 1e-5, loss)), 1e-6);
    }
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
        EXPECT_LE(oracle::relative_error(d_rows.data()[i], oracle::central_difference(rows.data() + i, 1e-5, loss)),
                  1e-6);
    }
}

TEST(AttentionPool, SummaryRequiresNormalizedWeights)
{
    Matrix rows = Matrix::Ones(2, 3);
    Eigen::VectorXd ok(2);
    ok << 0.25, 0.75;
    EXPECT_NEAR(weighted_word_summary(ok, rows).sum(), 3.0, 1e-15);
    Eigen::VectorXd bad(2);
    bad << 0.5, 0.6;
    EXPECT_THROW(weighted_word_summary(bad, rows), Error);
}
