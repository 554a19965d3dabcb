#include <gtest/gtest.h>

#include <sstream>

#include "deepbow/checkpoint.hpp"
#include "deepbow/error.hpp"
#include "deepbow/store.hpp"
#include "support.hpp"

using namespace deepbow;

namespace {

BoWStore random_store(std::uint64_t seed, std::size_t n)
{
    SplitMix64 rng(seed);
    StoreMetadata meta;
    meta.side = Side::product;
    meta.mode = ScoreMode::q_synonym;
    meta.truncation = TruncationPolicy::threshold(0.4);
    meta.vocab_hash = "v";
    meta.model_hash = "m";
    meta.index_space = 70000;
    meta.created = "2024-01-01T00:00:00Z";
    BoWStore store(meta);
    for (std::size_t i = 0; i < n; ++i) {
        SparseBoW bow;
        TokenId idx = static_cast<TokenId>(rng.below(50));
        const auto len = rng.below(200);
        for (std::uint64_t k = 0; k < len && idx < 70000; ++k) {
            bow.entries.push_back({idx, static_cast<float>(rng.uniform(0.4, 1.0))});
            idx += 1 + static_cast<TokenId>(rng.below(k % 7 == 0 ? 3000 : 20));
        }
        store.put("item-" + std::to_string(i) + (i % 3 == 0 ? "-连衣裙" : ""), std::move(bow));
    }
    return store;
}

std::string bytes_of(const BoWStore& store)
{
    std::ostringstream out;
    write_store(out, store);
    return out.str();
}

ErrorCode load_error(const std::string& bytes)
{
    std::istringstream in(bytes);
    try {
        read_store(in);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::internal;
}

}  // namespace

TEST(Store, RoundTripIsIdentical)
{
    for (std::uint64_t seed : {1, 2, 3}) {
        auto store = random_store(seed, 40);
        auto bytes = bytes_of(store);
        std::istringstream in(bytes);
        auto back = read_store(in);
        EXPECT_EQ(back, store);
        EXPECT_EQ(bytes_of(back), bytes);
    }
}

TEST(Store, EmptyStoreRoundTrips)
{
    auto store = random_store(1, 0);
    std::istringstream in(bytes_of(store));
    auto back = read_store(in);
    EXPECT_TRUE(back.empty());
    EXPECT_EQ(back.metadata(), store.metadata());
}

TEST(Store, FlippedPayloadByteFailsChecksum)
{
    auto bytes = bytes_of(random_store(4, 10));
    for (std::size_t at : {std::size_t{12}, bytes.size() / 2, bytes.size() - 5}) {
        auto corrupt = bytes;
        corrupt[at] = static_cast<char>(corrupt[at] ^ 0x10);
        EXPECT_EQ(load_error(corrupt), ErrorCode::integrity) << at;
    }
}

TEST(Store, TruncatedOrForeignFilesAreIntegrityErrors)
{
    auto bytes = bytes_of(random_store(5, 5));
    EXPECT_EQ(load_error(bytes.substr(0, bytes.size() - 9)), ErrorCode::integrity);
    EXPECT_EQ(load_error(bytes.substr(0, 6)), ErrorCode::integrity);
    auto foreign = bytes;
    foreign[0] = 'X';
    EXPECT_EQ(load_error(foreign), ErrorCode::integrity);
}

TEST(Store, UnknownVersionIsAVersionError)
{
    auto bytes = bytes_of(random_store(6, 3));
    bytes[4] = 2;
    EXPECT_EQ(load_error(bytes), ErrorCode::version);
}

TEST(Store, IntegrityErrorsReportOffsets)
{
    auto bytes = bytes_of(random_store(7, 3));
    bytes[bytes.size() - 1] ^= 0x01;
    std::istringstream in(bytes);
    try {
        read_store(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
}

TEST(Store, PutRejectsInvalidRepresentations)
{
    StoreMetadata meta;
    meta.index_space = 10;
    BoWStore store(meta);
    EXPECT_THROW(store.put("x", SparseBoW{{{3, 0.5F}, {2, 0.5F}}}), Error);
    EXPECT_THROW(store.put("x", SparseBoW{{{12, 0.5F}}}), Error);
    EXPECT_FALSE(store.put("x", SparseBoW{{{3, 0.5F}}}));
    EXPECT_TRUE(store.put("x", SparseBoW{{{4, 0.5F}}}));
    EXPECT_EQ(store.at("x").entries[0].index, 4u);
    try {
        (void)store.at("y");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::not_found);
    }
}

TEST(Precompute, ThresholdPolicyAndDuplicates)
{
    auto vocab = testing_support::small_vocab();
    auto model = DeepBowModel::initialize(testing_support::tiny_config(), vocab);
    std::vector<std::pair<std::string, std::string>> texts = {
        {"p1", "red silk dress"}, {"p2", "blue shirt"}, {"p1", "white coat"}, {"p3", "   "}};
    PrecomputeStats stats;
    auto store = precompute(texts, model, model_hash(model), vocab, Side::product, ScoreMode::q_synonym,
                            TruncationPolicy::threshold(0.4), &stats);
    EXPECT_EQ(store.size(), 2u);
    EXPECT_EQ(stats.duplicates, 1u);
    EXPECT_EQ(stats.skipped, 1u);
    EXPECT_EQ(stats.encoded, 3u);
    for (const auto& [id, bow] : store.entries()) {
        EXPECT_TRUE(bow.is_valid(vocab.size()));
        for (const auto& e : bow.entries) {
            EXPECT_GE(e.weight, 0.4F);
        }
    }
    auto expected = represent(model, vocab, "white coat", Side::product, ScoreMode::q_synonym,
                              TruncationPolicy::threshold(0.4));
    EXPECT_EQ(store.at("p1"), *expected);
    EXPECT_EQ(store.metadata().vocab_hash, vocab.hash());
    EXPECT_EQ(store.metadata().model_hash, model_hash(model));
}

TEST(Precompute, ThreadedOutputMatchesSequential)
{
    auto vocab = testing_support::small_vocab();
    auto model = DeepBowModel::initialize(testing_support::tiny_config(), vocab);
    std::vector<std::pair<std::string, std::string>> texts;
    for (const auto& e : testing_support::toy_examples()) {
        texts.emplace_back("id" + std::to_string(texts.size()), e.product);
    }
    auto a = precompute(texts, model, "m", vocab, Side::product, ScoreMode::q_synonym, TruncationPolicy::top_k(5));
    auto b = precompute(texts, model, "m", vocab, Side::product, ScoreMode::q_synonym, TruncationPolicy::top_k(5),
                        nullptr, 3);
    EXPECT_EQ(a.entries(), b.entries());
}

TEST(Precompute, QueryTermWeightingIsNotTruncated)
{
    auto vocab = testing_support::small_vocab();
    auto model = DeepBowModel::initialize(testing_support::tiny_config(), vocab);
    auto store = precompute({{"q", "red dress"}}, model, "m", vocab, Side::query, ScoreMode::q_weight,
                            TruncationPolicy::threshold(0.9));
    EXPECT_NEAR(store.at("q").weight_sum(), 1.0, 1e-6);
}

TEST(Precompute, EmptyCorpusAndVocabularyMismatch)
{
    auto vocab = testing_support::small_vocab();
    auto model = DeepBowModel::initialize(testing_support::tiny_config(), vocab);
    auto empty = precompute({}, model, "m", vocab, Side::product, ScoreMode::q_synonym, TruncationPolicy::top_k(5));
    EXPECT_TRUE(empty.empty());
    EXPECT_EQ(empty.metadata().vocab_hash, vocab.hash());

    auto other = testing_support::make_vocab({"red", "dress"}, 48);
    try {
        precompute({{"a", "red"}}, model, "m", other, Side::product, ScoreMode::q_synonym, TruncationPolicy::top_k(5));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::config);
    }
}

TEST(Corpus, ReadsIdTextRows)
{
    std::istringstream in("a\tred dress\n\nb\tblue shirt\r\n");
    auto rows = read_corpus(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].second, "blue shirt");
    std::istringstream bad("no tab here\n");
    EXPECT_THROW(read_corpus(bad), Error);
}

TEST(Checkpoint, RoundTripAndHash)
{
    auto vocab = testing_support::small_vocab();
    auto model = DeepBowModel::initialize(testing_support::tiny_config(), vocab);
    std::stringstream buf;
    write_checkpoint(buf, model);
    auto back = read_checkpoint(buf);
    EXPECT_EQ(model_hash(back), model_hash(model));
    EXPECT_EQ(back.config, model.config);
    EXPECT_EQ(back.vocab_hash, vocab.hash());
    EXPECT_EQ(back.heads.wc, model.heads.wc);

    auto other = model;
    other.heads.bg(0, 0) += 1e-12;
    EXPECT_NE(model_hash(other), model_hash(model));
}

TEST(Checkpoint, CorruptionIsDetected)
{
    auto vocab = testing_support::small_vocab();
    auto model = DeepBowModel::initialize(testing_support::tiny_config(), vocab);
    std::ostringstream out;
    write_checkpoint(out, model);
    auto bytes = out.str();
    std::istringstream truncated(bytes.substr(0, bytes.size() - 8));
    EXPECT_THROW(read_checkpoint(truncated), Error);
    auto bad_version = bytes;
    bad_version[8] = 9;
    std::istringstream v(bad_version);
    try {
        read_checkpoint(v);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::version);
    }
}
