// deepbow command-line front end.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

#include "deepbow/checkpoint.hpp"
#include "deepbow/config.hpp"
#include "deepbow/error.hpp"
#include "deepbow/metrics.hpp"
#include "deepbow/service.hpp"
#include "deepbow/store.hpp"
#include "deepbow/synthetic.hpp"
#include "deepbow/training.hpp"

using namespace deepbow;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
};

AppConfig resolve_config(const Globals& g)
{
    AppConfig c = g.config_path.empty() ? AppConfig{} : load_config(g.config_path);
    if (g.seed) {
        c.model.seed = *g.seed;
        c.train.seed = *g.seed;
    }
    if (g.deterministic) {
        c.train.deterministic = true;
    }
    return c;
}

std::vector<std::string> read_lines(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) {
            out.push_back(std::move(line));
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& line : read_lines(path)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorCode::input, "pair file rows must be <qid>\\t<pid>");
        }
        out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

// Loaded artifacts for score/explain/serve.
struct Artifacts {
    std::optional<BoWStore> queries;
    std::optional<BoWStore> products;
    std::optional<DeepBowModel> model;
    std::optional<Vocabulary> vocab;

    ServiceResources resources(const AppConfig& config) const
    {
        return {queries ? &*queries : nullptr, products ? &*products : nullptr, model ? &*model : nullptr,
                vocab ? &*vocab : nullptr, config};
    }
};

struct ArtifactPaths {
    std::string query_store, product_store, model, vocab;

    void add(CLI::App* cmd)
    {
        cmd->add_option("--query-store", query_store, "Precomputed query store");
        cmd->add_option("--product-store", product_store, "Precomputed product store");
        cmd->add_option("--model", model, "Checkpoint for on-the-fly encoding");
        cmd->add_option("--vocab", vocab, "Vocabulary file (needed with --model)");
    }

    Artifacts load() const
    {
        Artifacts a;
        if (!query_store.empty()) {
            a.queries = load_store(query_store);
        }
        if (!product_store.empty()) {
            a.products = load_store(product_store);
        }
        if (!model.empty()) {
            a.model = load_checkpoint(model);
        }
        if (!vocab.empty()) {
            a.vocab = Vocabulary::load(vocab);
        }
        return a;
    }
};

Server* g_server = nullptr;

void on_signal(int)
{
    if (g_server != nullptr) {
        g_server->interrupt();
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"DeepBoW sparse relevance models: train, precompute, score and serve"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Override model and training seeds");
    app.add_flag("--deterministic", g.deterministic, "Fixed-order gradient reduction");
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    // build-vocab
    auto* vocab_cmd = app.add_subcommand("build-vocab", "Count words and write a vocabulary");
    std::vector<std::string> vocab_inputs;
    std::string vocab_out;
    std::string vocab_format = "dataset";
    vocab_cmd->add_option("inputs", vocab_inputs, "Training files")->required()->check(CLI::ExistingFile);
    vocab_cmd->add_option("--format", vocab_format, "dataset (query\\tproduct\\tlabel) | corpus (id\\ttext) | lines")
        ->check(CLI::IsMember({"dataset", "corpus", "lines"}));
    vocab_cmd->add_option("-o,--out", vocab_out, "Output vocabulary")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    std::string train_path, valid_path, train_vocab, train_out, metrics_path, init_path;
    std::string train_mode;
    train_cmd->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--valid", valid_path)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--vocab", train_vocab)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--init", init_path, "Start from this checkpoint")->check(CLI::ExistingFile);
    train_cmd->add_option("--mode", train_mode, "q_weight | q_synonym");
    train_cmd->add_option("-o,--out", train_out, "Best checkpoint")->required();
    train_cmd->add_option("--metrics", metrics_path, "JSON-lines metrics log");

    // precompute
    auto* pre_cmd = app.add_subcommand("precompute", "Encode a corpus into a store");
    std::string pre_model, pre_vocab, pre_corpus, pre_out, pre_side = "product", pre_mode, pre_trunc;
    int pre_threads = 1;
    pre_cmd->add_option("--model", pre_model)->required()->check(CLI::ExistingFile);
    pre_cmd->add_option("--vocab", pre_vocab)->required()->check(CLI::ExistingFile);
    pre_cmd->add_option("--corpus", pre_corpus, "<id>\\t<text> per line")->required()->check(CLI::ExistingFile);
    pre_cmd->add_option("--side", pre_side)->check(CLI::IsMember({"query", "product"}));
    pre_cmd->add_option("--mode", pre_mode, "q_weight | q_synonym");
    pre_cmd->add_option("--truncation", pre_trunc, "none | topk:<k> | threshold:<tau>");
    pre_cmd->add_option("--threads", pre_threads)->check(CLI::PositiveNumber);
    pre_cmd->add_option("-o,--out", pre_out)->required();

    // score / explain
    auto* score_cmd = app.add_subcommand("score", "Score pairs from stores or text");
    ArtifactPaths score_paths;
    score_paths.add(score_cmd);
    std::string score_pairs, score_q, score_p, score_mode;
    score_cmd->add_option("--pairs", score_pairs, "<qid>\\t<pid> per line")->check(CLI::ExistingFile);
    score_cmd->add_option("--qid,--query", score_q, "Query id (or text with --model)");
    score_cmd->add_option("--pid,--product", score_p, "Product id (or text with --model)");
    score_cmd->add_option("--mode", score_mode);

    auto* explain_cmd = app.add_subcommand("explain", "Show matched terms for one pair");
    ArtifactPaths explain_paths;
    explain_paths.add(explain_cmd);
    std::string explain_q, explain_p, explain_mode;
    bool explain_json = false;
    explain_cmd->add_option("--qid,--query", explain_q)->required();
    explain_cmd->add_option("--pid,--product", explain_p)->required();
    explain_cmd->add_option("--mode", explain_mode);
    explain_cmd->add_flag("--json", explain_json);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "ROC-AUC and Neg PR-AUC on a labelled set");
    std::string eval_model, eval_vocab, eval_data, eval_mode, eval_trunc = "none";
    eval_cmd->add_option("--model", eval_model)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--vocab", eval_vocab)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", eval_data)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--mode", eval_mode);
    eval_cmd->add_option("--truncation", eval_trunc, "none | topk:<k> | threshold:<tau>");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Time store-to-store pair scoring");
    std::string bench_q, bench_p, bench_pairs, bench_mode;
    std::size_t bench_reps = 100;
    bench_cmd->add_option("--query-store", bench_q)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--product-store", bench_p)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--pairs", bench_pairs)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--reps", bench_reps);
    bench_cmd->add_option("--mode", bench_mode);

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Newline-delimited JSON over TCP");
    ArtifactPaths serve_paths;
    serve_paths.add(serve_cmd);
    std::optional<std::uint16_t> serve_port;
    std::string serve_host;
    serve_cmd->add_option("--port", serve_port);
    serve_cmd->add_option("--host", serve_host);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Write a rule-labelled synthetic dataset");
    SyntheticConfig synth;
    std::string synth_dir;
    synth_cmd->add_option("--words", synth.words);
    synth_cmd->add_option("--synonym-pairs", synth.synonym_pairs);
    synth_cmd->add_option("--train", synth.train);
    synth_cmd->add_option("--valid", synth.valid);
    synth_cmd->add_option("--test", synth.test);
    synth_cmd->add_option("-o,--out-dir", synth_dir)->required();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        const AppConfig config = resolve_config(g);

        if (*vocab_cmd) {
            std::vector<std::string> texts;
            for (const auto& path : vocab_inputs) {
                if (vocab_format == "dataset") {
                    for (auto& e : load_dataset(path)) {
                        texts.push_back(std::move(e.query));
                        texts.push_back(std::move(e.product));
                    }
                } else if (vocab_format == "corpus") {
                    for (auto& [_, text] : load_corpus(path)) {
                        texts.push_back(std::move(text));
                    }
                } else {
                    for (auto& line : read_lines(path)) {
                        texts.push_back(std::move(line));
                    }
                }
            }
            auto vocab = build_vocabulary(texts, config.vocab);
            vocab.save(vocab_out);
            spdlog::info("vocabulary: {} words + {} buckets, hash {}", vocab.v(), vocab.buckets(), vocab.hash());
        } else if (*train_cmd) {
            auto vocab = Vocabulary::load(train_vocab);
            TrainConfig tc = config.train;
            if (!train_mode.empty()) {
                tc.mode = parse_score_mode(train_mode);
            }
            auto initial = init_path.empty() ? DeepBowModel::initialize(config.model, vocab) : load_checkpoint(init_path);
            std::ofstream metrics;
            if (!metrics_path.empty()) {
                metrics.open(metrics_path);
            }
            auto result = train(load_dataset(train_path), load_dataset(valid_path), vocab, std::move(initial), tc,
                                [&](const EpochMetrics& m) {
                                    spdlog::info("epoch {}: loss {:.4f} valid {:.4f} roc_auc {:.4f} neg_pr_auc {:.4f} ({:.1f}s)",
                                                 m.epoch, m.loss, m.valid_loss, m.roc_auc, m.neg_pr_auc, m.seconds);
                                    if (metrics) {
                                        write_metrics_log(metrics, {m});
                                        metrics.flush();
                                    }
                                });
            save_checkpoint(train_out, result.model);
            spdlog::info("best epoch {} written to {} (hash {})", result.best_epoch, train_out,
                         model_hash(result.model));
        } else if (*pre_cmd) {
            auto model = load_checkpoint(pre_model);
            auto vocab = Vocabulary::load(pre_vocab);
            const auto side = parse_side(pre_side);
            const auto mode = pre_mode.empty() ? config.train.mode : parse_score_mode(pre_mode);
            const auto policy = pre_trunc.empty() ? config.truncation(side) : parse_truncation(pre_trunc);
            PrecomputeStats stats;
            auto store = precompute(load_corpus(pre_corpus), model, model_hash(model), vocab, side, mode, policy,
                                    &stats, pre_threads);
            save_store(pre_out, store);
            spdlog::info("stored {} {} representations ({} skipped, {} duplicate ids)", store.size(),
                         to_string(side), stats.skipped, stats.duplicates);
        } else if (*score_cmd) {
            const auto artifacts = score_paths.load();
            Service service(artifacts.resources(config));
            auto request = [&](const std::string& q, const std::string& p) {
                nlohmann::json r = {{"op", "score"}, {"qid", q}, {"pid", p}};
                if (!score_mode.empty()) {
                    r["mode"] = score_mode;
                }
                auto reply = service.handle(r);
                reply["qid"] = q;
                reply["pid"] = p;
                std::cout << reply.dump() << '\n';
                return !reply.contains("error");
            };
            bool ok = true;
            if (!score_pairs.empty()) {
                for (const auto& [q, p] : read_pairs(score_pairs)) {
                    ok = request(q, p) && ok;
                }
            } else if (!score_q.empty() && !score_p.empty()) {
                ok = request(score_q, score_p);
            } else {
                throw Error(ErrorCode::input, "score needs --pairs or both --qid and --pid");
            }
            return ok ? 0 : 1;
        } else if (*explain_cmd) {
            const auto artifacts = explain_paths.load();
            Service service(artifacts.resources(config));
            nlohmann::json r = {{"op", "explain"}, {"qid", explain_q}, {"pid", explain_p}};
            if (!explain_mode.empty()) {
                r["mode"] = explain_mode;
            }
            auto reply = service.handle(r);
            if (explain_json || reply.contains("error")) {
                std::cout << reply.dump(2) << '\n';
                return reply.contains("error") ? 1 : 0;
            }
            std::cout << std::left << std::setw(24) << "term" << std::right << std::setw(10) << "p" << std::setw(10)
                      << "g" << std::setw(10) << "p*g" << '\n';
            std::cout << std::fixed << std::setprecision(5);
            for (const auto& m : reply["matches"]) {
                std::cout << std::left << std::setw(24) << m["term"].get<std::string>() << std::right << std::setw(10)
                          << m["p"].get<double>() << std::setw(10) << m["g"].get<double>() << std::setw(10)
                          << m["pg"].get<double>() << '\n';
            }
            std::cout << "relevance score: " << reply["total"].get<double>() << '\n';
        } else if (*eval_cmd) {
            auto model = load_checkpoint(eval_model);
            auto vocab = Vocabulary::load(eval_vocab);
            const auto mode = eval_mode.empty() ? config.train.mode : parse_score_mode(eval_mode);
            auto features = featurize_examples(load_dataset(eval_data), vocab, model.config.max_len);
            auto scores = score_examples(model, features, mode, parse_truncation(eval_trunc));
            std::vector<int> labels;
            for (const auto& f : features) {
                labels.push_back(f.label);
            }
            std::cout << evaluate(make_scored_set(scores, labels)).to_json().dump() << '\n';
        } else if (*bench_cmd) {
            auto queries = load_store(bench_q);
            auto products = load_store(bench_p);
            const auto mode = bench_mode.empty() ? queries.metadata().mode : parse_score_mode(bench_mode);
            auto pairs = read_pairs(bench_pairs);
            std::cout << bench_latency(queries, products, pairs, mode, bench_reps).to_json().dump() << '\n';
        } else if (*serve_cmd) {
            auto cfg = config;
            if (serve_port) {
                cfg.serve.port = *serve_port;
            }
            if (!serve_host.empty()) {
                cfg.serve.host = serve_host;
            }
            const auto artifacts = serve_paths.load();
            Service service(artifacts.resources(cfg));
            Server server(service);
            const auto port = server.listen(cfg.serve.host, cfg.serve.port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            spdlog::info("listening on {}:{}", cfg.serve.host, port);
            server.run();
            g_server = nullptr;
            server.stop();
        } else if (*synth_cmd) {
            auto data = generate_synthetic(synth);
            save_dataset(synth_dir + "/train.tsv", data.train);
            save_dataset(synth_dir + "/valid.tsv", data.valid);
            save_dataset(synth_dir + "/test.tsv", data.test);
            // test split as id-keyed corpora plus its pair list, ready for precompute/score/bench
            std::map<std::string, std::string> qids;
            std::map<std::string, std::string> pids;
            std::ofstream queries(synth_dir + "/queries.tsv");
            std::ofstream products(synth_dir + "/products.tsv");
            std::ofstream pairs(synth_dir + "/pairs.tsv");
            auto id_for = [](std::map<std::string, std::string>& ids, std::ofstream& out, const std::string& prefix,
                             const std::string& text) {
                auto [it, added] = ids.emplace(text, prefix + std::to_string(ids.size()));
                if (added) {
                    out << it->second << '\t' << text << '\n';
                }
                return it->second;
            };
            for (const auto& e : data.test) {
                pairs << id_for(qids, queries, "q", e.query) << '\t' << id_for(pids, products, "p", e.product) << '\n';
            }
            spdlog::info("wrote {} / {} / {} examples to {}", data.train.size(), data.valid.size(), data.test.size(),
                         synth_dir);
        }
    } catch (const Error& e) {
        spdlog::error("{}: {}", to_string(e.code()), e.what());
        return 2;
    }
    return 0;
}
