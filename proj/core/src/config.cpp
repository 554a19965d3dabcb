#include "deepbow/config.hpp"

#include <fstream>
#include <set>

#include "deepbow/error.hpp"

namespace deepbow {

namespace {

void check_keys(const nlohmann::json& j, const std::string& section, std::initializer_list<const char*> allowed)
{
    if (!j.is_object()) {
        throw Error(ErrorCode::config, "config section '" + section + "' must be an object");
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (ok.count(key) == 0) {
            throw Error(ErrorCode::config, "unknown config key '" + section + "." + key + "'");
        }
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out)
{
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

TruncationPolicy truncation_from(const nlohmann::json& j, const std::string& section, TruncationPolicy base)
{
    check_keys(j, section, {"mode", "k", "tau", "query", "product"});
    std::string mode;
    switch (base.kind) {
    case TruncationPolicy::Kind::topk: mode = "topk"; break;
    case TruncationPolicy::Kind::threshold: mode = "threshold"; break;
    case TruncationPolicy::Kind::none: mode = "none"; break;
    }
    read(j, "mode", mode);
    std::size_t k = base.kind == TruncationPolicy::Kind::topk ? base.k : 128;
    double tau = base.kind == TruncationPolicy::Kind::threshold ? base.tau : 0.4;
    read(j, "k", k);
    read(j, "tau", tau);
    if (mode == "topk") {
        if (k == 0) {
            throw Error(ErrorCode::config, section + ".k must be >= 1");
        }
        return TruncationPolicy::top_k(k);
    }
    if (mode == "threshold") {
        if (!(tau >= 0.0 && tau <= 1.0)) {
            throw Error(ErrorCode::config, section + ".tau must lie in [0, 1]");
        }
        return TruncationPolicy::threshold(tau);
    }
    if (mode == "none") {
        return TruncationPolicy::none();
    }
    throw Error(ErrorCode::config, "unknown truncation mode '" + mode + "'");
}

nlohmann::json truncation_to(const TruncationPolicy& p)
{
    switch (p.kind) {
    case TruncationPolicy::Kind::topk: return {{"mode", "topk"}, {"k", p.k}};
    case TruncationPolicy::Kind::threshold: return {{"mode", "threshold"}, {"tau", p.tau}};
    case TruncationPolicy::Kind::none: break;
    }
    return {{"mode", "none"}};
}

}  // namespace

TruncationPolicy parse_truncation(const std::string& text)
{
    if (text == "none") {
        return TruncationPolicy::none();
    }
    auto colon = text.find(':');
    const auto kind = text.substr(0, colon);
    const auto value = colon == std::string::npos ? std::string() : text.substr(colon + 1);
    try {
        if (kind == "topk" && !value.empty()) {
            nlohmann::json j = {{"mode", "topk"}, {"k", std::stoull(value)}};
            return truncation_from(j, "truncation", {});
        }
        if (kind == "threshold" && !value.empty()) {
            nlohmann::json j = {{"mode", "threshold"}, {"tau", std::stod(value)}};
            return truncation_from(j, "truncation", {});
        }
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorCode::config, "bad truncation '" + text + "' (expected none, topk:<k> or threshold:<tau>)");
}

AppConfig parse_config(const nlohmann::json& j)
{
    AppConfig c;
    try {
        check_keys(j, "config", {"vocab", "model", "train", "truncation", "serve"});
        if (j.contains("vocab")) {
            const auto& s = j["vocab"];
            check_keys(s, "vocab", {"v", "B", "ngram_order", "segmenter"});
            read(s, "v", c.vocab.v);
            read(s, "B", c.vocab.buckets);
            read(s, "ngram_order", c.vocab.ngram_order);
            read(s, "segmenter", c.vocab.segmenter);
        }
        if (j.contains("model")) {
            const auto& s = j["model"];
            check_keys(s, "model",
                       {"d", "L", "layers", "heads", "ffn", "max_len", "use_char_encoder", "use_word_encoder", "seed"});
            read(s, "d", c.model.d);
            read(s, "L", c.model.layers);
            read(s, "layers", c.model.layers);
            read(s, "heads", c.model.heads);
            read(s, "ffn", c.model.ffn);
            read(s, "max_len", c.model.max_len);
            read(s, "use_char_encoder", c.model.use_char_encoder);
            read(s, "use_word_encoder", c.model.use_word_encoder);
            read(s, "seed", c.model.seed);
        }
        if (j.contains("train")) {
            const auto& s = j["train"];
            check_keys(s, "train",
                       {"learning_rate", "beta1", "beta2", "epsilon", "batch_tokens", "mode", "max_epochs",
                        "patience", "seed", "v_norm", "use_norm_loss", "deterministic", "threads"});
            read(s, "learning_rate", c.train.learning_rate);
            read(s, "beta1", c.train.beta1);
            read(s, "beta2", c.train.beta2);
            read(s, "epsilon", c.train.epsilon);
            read(s, "batch_tokens", c.train.batch_tokens);
            if (s.contains("mode")) {
                c.train.mode = parse_score_mode(s["mode"].get<std::string>());
            }
            read(s, "max_epochs", c.train.max_epochs);
            read(s, "patience", c.train.patience);
            read(s, "seed", c.train.seed);
            read(s, "v_norm", c.train.v_norm);
            read(s, "use_norm_loss", c.train.use_norm_loss);
            read(s, "deterministic", c.train.deterministic);
            read(s, "threads", c.train.threads);
        }
        if (j.contains("truncation")) {
            const auto& s = j["truncation"];
            auto shared = truncation_from(s, "truncation", c.product_truncation);
            c.query_truncation = shared;
            c.product_truncation = shared;
            if (s.contains("query")) {
                c.query_truncation = truncation_from(s["query"], "truncation.query", shared);
            }
            if (s.contains("product")) {
                c.product_truncation = truncation_from(s["product"], "truncation.product", shared);
            }
        }
        if (j.contains("serve")) {
            const auto& s = j["serve"];
            check_keys(s, "serve", {"host", "port", "threshold"});
            read(s, "host", c.serve.host);
            read(s, "port", c.serve.port);
            read(s, "threshold", c.serve.threshold);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, std::string("bad config value: ") + e.what());
    }
    c.model.validate();
    c.train.validate();
    return c;
}

AppConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open config " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, path + ": " + e.what());
    }
    return parse_config(j);
}

nlohmann::json to_json(const AppConfig& c)
{
    auto trunc = truncation_to(c.product_truncation);
    if (!(c.query_truncation == c.product_truncation)) {
        trunc["query"] = truncation_to(c.query_truncation);
    }
    return {{"vocab",
             {{"v", c.vocab.v}, {"B", c.vocab.buckets}, {"ngram_order", c.vocab.ngram_order},
              {"segmenter", c.vocab.segmenter}}},
            {"model",
             {{"d", c.model.d}, {"L", c.model.layers}, {"heads", c.model.heads}, {"ffn", c.model.ffn},
              {"max_len", c.model.max_len}, {"use_char_encoder", c.model.use_char_encoder},
              {"use_word_encoder", c.model.use_word_encoder}, {"seed", c.model.seed}}},
            {"train",
             {{"learning_rate", c.train.learning_rate}, {"beta1", c.train.beta1}, {"beta2", c.train.beta2},
              {"epsilon", c.train.epsilon}, {"batch_tokens", c.train.batch_tokens},
              {"mode", std::string(to_string(c.train.mode))}, {"max_epochs", c.train.max_epochs},
              {"patience", c.train.patience}, {"seed", c.train.seed}, {"v_norm", c.train.v_norm},
              {"use_norm_loss", c.train.use_norm_loss}, {"deterministic", c.train.deterministic},
              {"threads", c.train.threads}}},
            {"truncation", trunc},
            {"serve", {{"host", c.serve.host}, {"port", c.serve.port}, {"threshold", c.serve.threshold}}}};
}

}  // namespace deepbow
