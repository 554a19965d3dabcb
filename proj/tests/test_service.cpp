#include <arpa/inet.h>
#include <gtest/gtest.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

#include "deepbow/checkpoint.hpp"
#include "deepbow/error.hpp"
#include "deepbow/service.hpp"
#include "support.hpp"

using namespace deepbow;

namespace {

struct Fixture {
    Vocabulary vocab = testing_support::small_vocab();
    DeepBowModel model = DeepBowModel::initialize(testing_support::tiny_config(), vocab);
    BoWStore queries;
    BoWStore products;

    Fixture()
    {
        queries = precompute({{"q1", "red dress"}, {"q2", "blue shirt"}}, model, model_hash(model), vocab, Side::query,
                             ScoreMode::q_synonym, TruncationPolicy::top_k(8));
        products = precompute({{"p1", "red silk dress women"}, {"p2", "black winter coat"}}, model, model_hash(model),
                              vocab, Side::product, ScoreMode::q_synonym, TruncationPolicy::top_k(8));
    }

    ServiceResources with_model() const { return {&queries, &products, &model, &vocab, {}}; }
    ServiceResources stores_only() const { return {&queries, &products, nullptr, nullptr, {}}; }
};

std::string error_code(const nlohmann::json& reply)
{
    return reply.contains("error") ? reply["error"]["code"].get<std::string>() : "";
}

}  // namespace

TEST(Service, StoredPairScoresEqualLibraryScores)
{
    Fixture f;
    Service service(f.stores_only());
    for (const auto* q : {"q1", "q2"}) {
        for (const auto* p : {"p1", "p2"}) {
            auto reply = service.handle({{"op", "score"}, {"mode", "q_synonym"}, {"qid", q}, {"pid", p}});
            ASSERT_FALSE(reply.contains("error")) << reply.dump();
            EXPECT_EQ(reply["score"].get<double>(), score(f.queries.at(q), f.products.at(p), ScoreMode::q_synonym));
        }
    }
}

TEST(Service, DecisionUsesConfiguredThreshold)
{
    Fixture f;
    auto res = f.stores_only();
    const double s = score(f.queries.at("q1"), f.products.at("p1"), ScoreMode::q_synonym);
    res.config.serve.threshold = s;
    EXPECT_EQ(Service(res).handle({{"op", "score"}, {"qid", "q1"}, {"pid", "p1"}})["decision"], "good");
    res.config.serve.threshold = std::nextafter(s, 2.0);
    EXPECT_EQ(Service(res).handle({{"op", "score"}, {"qid", "q1"}, {"pid", "p1"}})["decision"], "bad");
}

TEST(Service, ExplainRowsAddUpToTheScore)
{
    Fixture f;
    Service service(f.with_model());
    auto reply = service.handle({{"op", "explain"}, {"qid", "q1"}, {"pid", "p1"}});
    ASSERT_TRUE(reply.contains("matches")) << reply.dump();
    double sum = 0.0;
    for (const auto& row : reply["matches"]) {
        EXPECT_TRUE(row.contains("term") && row.contains("p") && row.contains("g") && row.contains("pg"));
        sum += row["pg"].get<double>();
    }
    EXPECT_NEAR(sum, reply["total"].get<double>(), 1e-12);
}

TEST(Service, EncodeReturnsSortedPostings)
{
    Fixture f;
    Service service(f.with_model());
    auto reply = service.handle({{"op", "encode"}, {"text", "red dress"}, {"side", "query"}, {"mode", "q_weight"}});
    ASSERT_TRUE(reply.contains("entries")) << reply.dump();
    double sum = 0.0;
    std::int64_t prev = -1;
    for (const auto& e : reply["entries"]) {
        EXPECT_GT(e["index"].get<std::int64_t>(), prev);
        prev = e["index"].get<std::int64_t>();
        sum += e["weight"].get<double>();
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Service, UnknownIdsFallBackToEncodingOnlyWithAModel)
{
    Fixture f;
    auto reply = Service(f.stores_only()).handle({{"op", "score"}, {"qid", "nope"}, {"pid", "missing"}});
    EXPECT_EQ(error_code(reply), "not_found");

    Service with_model(f.with_model());
    auto text_reply = with_model.handle({{"op", "score"}, {"qtext", "red dress"}, {"pid", "p1"}});
    ASSERT_FALSE(text_reply.contains("error")) << text_reply.dump();
    auto q = represent(f.model, f.vocab, "red dress", Side::query, ScoreMode::q_synonym, TruncationPolicy::top_k(8));
    EXPECT_EQ(text_reply["score"].get<double>(), score(*q, f.products.at("p1"), ScoreMode::q_synonym));

    auto id_reply = with_model.handle({{"op", "score"}, {"qid", "red dress"}, {"pid", "p1"}});
    EXPECT_EQ(id_reply["score"], text_reply["score"]);
}

TEST(Service, ProtocolErrors)
{
    Fixture f;
    Service service(f.with_model());
    EXPECT_EQ(error_code(nlohmann::json::parse(service.handle_line("{not json"))), "protocol");
    EXPECT_EQ(error_code(service.handle(nlohmann::json::array())), "protocol");
    EXPECT_EQ(error_code(service.handle({{"op", "dance"}})), "protocol");
    EXPECT_EQ(error_code(service.handle({{"op", "score"}, {"qid", "q1"}})), "protocol");
    EXPECT_EQ(error_code(service.handle({{"op", "score"}, {"qid", 5}, {"pid", "p1"}})), "protocol");
    EXPECT_EQ(error_code(service.handle({{"op", "score"}, {"mode", "bm25"}, {"qid", "q1"}, {"pid", "p1"}})),
              "protocol");
    // q1 was stored for q_synonym; its representation is wrong for q_weight
    EXPECT_EQ(error_code(service.handle({{"op", "score"}, {"mode", "q_weight"}, {"qid", "q1"}, {"pid", "p1"}})),
              "protocol");
}

TEST(Service, RejectsInconsistentArtifacts)
{
    Fixture f;
    auto other = testing_support::make_vocab({"x"}, 4);
    ServiceResources bad{&f.queries, &f.products, &f.model, &other, {}};
    EXPECT_THROW(Service{bad}, Error);
    ServiceResources swapped{&f.products, &f.queries, nullptr, nullptr, {}};
    EXPECT_THROW(Service{swapped}, Error);
}

namespace {

int connect_to(std::uint16_t port)
{
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        return -1;
    }
    return fd;
}

std::string read_line(int fd)
{
    std::string line;
    char c;
    while (::recv(fd, &c, 1, 0) == 1 && c != '\n') {
        line.push_back(c);
    }
    return line;
}

}  // namespace

TEST(Server, LineProtocolTranscript)
{
    Fixture f;
    Service service(f.with_model());
    Server server(service);
    const auto port = server.listen("127.0.0.1", 0);
    std::thread loop([&] { server.run(); });

    const std::vector<std::string> requests = {
        R"({"op":"score","mode":"q_synonym","qid":"q1","pid":"p1"})",
        R"({"op":"explain","qid":"q2","pid":"p2"})",
        R"({"op":"encode","text":"white coat","side":"product"})",
        R"(garbage)",
    };
    const int a = connect_to(port);
    const int b = connect_to(port);
    ASSERT_GE(a, 0);
    ASSERT_GE(b, 0);
    std::string batch;
    for (const auto& r : requests) {
        batch += r + "\n";
    }
    ASSERT_EQ(::send(a, batch.data(), batch.size(), 0), static_cast<ssize_t>(batch.size()));
    for (const auto& r : requests) {
        EXPECT_EQ(read_line(a), service.handle_line(r));
    }
    const std::string one = requests[0] + "\r\n";
    ::send(b, one.data(), one.size(), 0);
    EXPECT_EQ(read_line(b), service.handle_line(requests[0]));

    ::close(a);
    server.stop();
    loop.join();
    ::close(b);
}
