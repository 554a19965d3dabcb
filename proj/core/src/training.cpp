#include "deepbow/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "deepbow/error.hpp"
#include "deepbow/metrics.hpp"

namespace deepbow {

// ---------------------------------------------------------------------------
// dataset io

std::vector<RelevanceExample> read_dataset(std::istream& in)
{
    std::vector<RelevanceExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            throw Error(ErrorCode::input, "dataset line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        }
        auto label = line.substr(t2 + 1);
        if (label != "0" && label != "1") {
            throw Error(ErrorCode::input, "dataset line " + std::to_string(line_no) + ": label must be 0 or 1");
        }
        out.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), label == "1" ? 1 : 0});
    }
    return out;
}

std::vector<RelevanceExample> load_dataset(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open dataset " + path);
    }
    return read_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<RelevanceExample>& examples)
{
    for (const auto& e : examples) {
        out << e.query << '\t' << e.product << '\t' << e.label << '\n';
    }
}

void save_dataset(const std::string& path, const std::vector<RelevanceExample>& examples)
{
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write dataset " + path);
    }
    write_dataset(out, examples);
}

// ---------------------------------------------------------------------------
// losses

void TrainConfig::validate() const
{
    if (!(learning_rate > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(epsilon > 0)
        || batch_tokens == 0 || max_epochs <= 0 || patience < 0 || v_norm < 0 || threads <= 0) {
        throw Error(ErrorCode::config, "training rates, budgets and counts must be positive");
    }
}

double binary_cross_entropy(double p, int label)
{
    const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return label != 0 ? -std::log(q) : -std::log(1.0 - q);
}

double binary_cross_entropy_grad(double p, int label)
{
    if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) {
        return 0.0;
    }
    return label != 0 ? -1.0 / p : 1.0 / (1.0 - p);
}

double l2_norm(const DenseBoW& dense)
{
    return dense.weights.norm();
}

std::vector<ExampleFeatures> featurize_examples(const std::vector<RelevanceExample>& examples,
                                                const Vocabulary& vocab, std::size_t max_len, std::size_t* skipped)
{
    std::vector<ExampleFeatures> out;
    out.reserve(examples.size());
    std::size_t dropped = 0;
    for (const auto& e : examples) {
        ExampleFeatures f{featurize(e.query, vocab, max_len), featurize(e.product, vocab, max_len), e.label};
        if (f.query.empty() || f.product.empty() || f.query.unigram_count == 0) {
            ++dropped;
            continue;
        }
        out.push_back(std::move(f));
    }
    if (skipped != nullptr) {
        *skipped = dropped;
    }
    return out;
}

LossBreakdown example_loss(const DeepBowModel& model, const ExampleFeatures& ex, const TrainConfig& config,
                           DeepBowModel* grads, double grad_scale)
{
    const double v_norm = config.v_norm > 0 ? config.v_norm : static_cast<double>(model.vocab_size);
    LossBreakdown out;

    const bool synonym = config.mode == ScoreMode::q_synonym;
    TextTrace q = forward_text(model, ex.query, synonym);
    TextTrace d = forward_text(model, ex.product, true);
    const RowVector& prod = d.expansion->dense.weights;

    const double norm = prod.norm();
    out.norm_term = config.use_norm_loss ? norm / v_norm : 0.0;

    Eigen::VectorXd d_query_weights;
    RowVector d_query_dense;
    RowVector d_prod;
    if (grads != nullptr) {
        d_prod = RowVector::Zero(prod.size());
    }

    if (!synonym) {
        const auto& tokens = q.word_tokens;
        double r = 0.0;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            r += q.pool_weights(static_cast<Eigen::Index>(i)) * prod(tokens[i]);
        }
        out.score = r;
        out.ce = binary_cross_entropy(r, ex.label);
        if (grads != nullptr) {
            const double g = binary_cross_entropy_grad(r, ex.label) * grad_scale;
            d_query_weights.resize(static_cast<Eigen::Index>(tokens.size()));
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                d_query_weights(static_cast<Eigen::Index>(i)) = g * prod(tokens[i]);
                d_prod(tokens[i]) += g * q.pool_weights(static_cast<Eigen::Index>(i));
            }
        }
    } else {
        const RowVector& qd = q.expansion->dense.weights;
        const double mass = qd.sum();
        const double r = qd.dot(prod) / mass;
        out.score = r;
        out.ce = binary_cross_entropy(r, ex.label);

        const auto unigrams = ex.query.unigrams();
        const double inv_n = 1.0 / static_cast<double>(unigrams.size());
        double r_avg = 0.0;
        for (auto t : unigrams) {
            r_avg += inv_n * prod(t);
        }
        out.score_avg = r_avg;
        out.ce_avg = binary_cross_entropy(r_avg, ex.label);

        if (grads != nullptr) {
            const double g = binary_cross_entropy_grad(r, ex.label) * grad_scale;
            d_query_dense = (g / mass) * (prod.array() - r).matrix();
            d_prod += (g / mass) * qd;
            const double g_avg = binary_cross_entropy_grad(r_avg, ex.label) * grad_scale;
            for (auto t : unigrams) {
                d_prod(t) += g_avg * inv_n;
            }
        }
    }
    out.total = out.ce + out.ce_avg + out.norm_term;

    if (grads != nullptr) {
        if (config.use_norm_loss && norm > 0.0) {
            d_prod += (grad_scale / (v_norm * norm)) * prod;
        }
        backward_text(model, q, d_query_weights, d_query_dense, *grads);
        backward_text(model, d, Eigen::VectorXd(), d_prod, *grads);
    }
    return out;
}

// ---------------------------------------------------------------------------
// optimizer

AdamState AdamState::for_model(const DeepBowModel& model)
{
    AdamState s;
    for (const auto& t : model.tensors()) {
        s.m.push_back(Matrix::Zero(t.value->rows(), t.value->cols()));
        s.v.push_back(Matrix::Zero(t.value->rows(), t.value->cols()));
    }
    return s;
}

void adam_step(DeepBowModel& params, const DeepBowModel& grads, AdamState& state, const TrainConfig& config)
{
    auto p = params.tensors();
    auto g = grads.tensors();
    if (p.size() != g.size() || state.m.size() != p.size() || state.v.size() != p.size()) {
        throw Error(ErrorCode::internal, "optimizer state does not match the model");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].value->rows() != g[i].value->rows() || p[i].value->cols() != g[i].value->cols()
            || state.m[i].rows() != p[i].value->rows() || state.m[i].cols() != p[i].value->cols()) {
            throw Error(ErrorCode::internal, "optimizer state shape mismatch at " + p[i].name);
        }
        if (!g[i].value->allFinite()) {
            throw Error(ErrorCode::numeric, "non-finite gradient in " + g[i].name + " at step "
                                                + std::to_string(state.step + 1));
        }
    }

    ++state.step;
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = config.learning_rate;
    const double eps = config.epsilon;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto& m = state.m[i];
        auto& v = state.v[i];
        const Matrix& grad = *g[i].value;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
        p[i].value->array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
}

// ---------------------------------------------------------------------------
// batching and the training loop

std::vector<std::vector<std::size_t>> make_batches(const std::vector<ExampleFeatures>& examples,
                                                   std::size_t budget, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        keyed.emplace_back(rng.next(), i);
    }
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
        auto la = examples[a.second].token_count();
        auto lb = examples[b.second].token_count();
        return la != lb ? la < lb : a.first < b.first;
    });

    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::size_t> current;
    std::size_t tokens = 0;
    for (const auto& [_, idx] : keyed) {
        auto n = examples[idx].token_count();
        if (!current.empty() && tokens + n > budget) {
            batches.push_back(std::move(current));
            current.clear();
            tokens = 0;
        }
        current.push_back(idx);
        tokens += n;
    }
    if (!current.empty()) {
        batches.push_back(std::move(current));
    }
    for (std::size_t i = batches.size(); i > 1; --i) {
        std::swap(batches[i - 1], batches[rng.below(i)]);
    }
    return batches;
}

std::vector<double> score_examples(const DeepBowModel& model, const std::vector<ExampleFeatures>& examples,
                                   ScoreMode mode, const TruncationPolicy& policy)
{
    std::vector<double> scores;
    scores.reserve(examples.size());
    for (const auto& ex : examples) {
        auto q = represent(model, ex.query, Side::query, mode, policy);
        auto d = represent(model, ex.product, Side::product, mode, policy);
        scores.push_back(q && d ? score(*q, *d, mode) : 0.0);
    }
    return scores;
}

namespace {

void zero(DeepBowModel& grads)
{
    for (auto& t : grads.tensors()) {
        t.value->setZero();
    }
}

void add_into(DeepBowModel& dst, const DeepBowModel& src)
{
    auto d = dst.tensors();
    auto s = src.tensors();
    for (std::size_t i = 0; i < d.size(); ++i) {
        *d[i].value += *s[i].value;
    }
}

}  // namespace

TrainResult train(const std::vector<RelevanceExample>& train_set, const std::vector<RelevanceExample>& valid_set,
                  const Vocabulary& vocab, DeepBowModel initial, const TrainConfig& config,
                  const EpochCallback& on_epoch)
{
    config.validate();
    if (train_set.empty() || valid_set.empty()) {
        throw Error(ErrorCode::config, "training and validation splits must be non-empty");
    }
    if (initial.vocab_hash != vocab.hash() || initial.vocab_size != vocab.size()) {
        throw Error(ErrorCode::config, "model was initialized for a different vocabulary");
    }

    TrainResult result;
    std::size_t skipped_valid = 0;
    auto train_features = featurize_examples(train_set, vocab, initial.config.max_len, &result.skipped_examples);
    auto valid_features = featurize_examples(valid_set, vocab, initial.config.max_len, &skipped_valid);
    if (train_features.empty() || valid_features.empty()) {
        throw Error(ErrorCode::config, "no usable examples after segmentation");
    }
    if (result.skipped_examples + skipped_valid > 0) {
        spdlog::warn("skipped {} training and {} validation examples with empty segmentation",
                     result.skipped_examples, skipped_valid);
    }
    std::vector<int> valid_labels;
    for (const auto& f : valid_features) {
        valid_labels.push_back(f.label);
    }

    DeepBowModel model = std::move(initial);
    AdamState adam = AdamState::for_model(model);
    const int shards = std::max(1, config.deterministic ? config.threads
                                                          : static_cast<int>(std::thread::hardware_concurrency()));
    std::vector<DeepBowModel> shard_grads(static_cast<std::size_t>(shards), DeepBowModel::zeros_like(model));
    std::vector<double> shard_loss(static_cast<std::size_t>(shards));

    double best_auc = -std::numeric_limits<double>::infinity();
    int since_best = 0;
    result.model = model;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        auto batches = make_batches(train_features, config.batch_tokens, config.seed + static_cast<std::uint64_t>(epoch));
        double loss_sum = 0.0;
        std::size_t seen = 0;

        for (const auto& batch : batches) {
            const double scale = 1.0 / static_cast<double>(batch.size());
            auto run_shard = [&](std::size_t s) {
                auto& g = shard_grads[s];
                zero(g);
                double local = 0.0;
                const std::size_t begin = batch.size() * s / static_cast<std::size_t>(shards);
                const std::size_t end = batch.size() * (s + 1) / static_cast<std::size_t>(shards);
                for (std::size_t i = begin; i < end; ++i) {
                    local += example_loss(model, train_features[batch[i]], config, &g, scale).total;
                }
                shard_loss[s] = local;
            };
            if (shards == 1) {
                run_shard(0);
            } else {
                std::vector<std::thread> workers;
                for (std::size_t s = 0; s < static_cast<std::size_t>(shards); ++s) {
                    workers.emplace_back(run_shard, s);
                }
                for (auto& w : workers) {
                    w.join();
                }
                for (std::size_t s = 1; s < static_cast<std::size_t>(shards); ++s) {
                    add_into(shard_grads[0], shard_grads[s]);
                }
            }
            for (double l : shard_loss) {
                loss_sum += l;
            }
            seen += batch.size();
            adam_step(model, shard_grads[0], adam, config);
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.loss = loss_sum / static_cast<double>(seen);
        double valid_loss = 0.0;
        for (const auto& f : valid_features) {
            valid_loss += example_loss(model, f, config).total;
        }
        m.valid_loss = valid_loss / static_cast<double>(valid_features.size());
        auto scores = score_examples(model, valid_features, config.mode, TruncationPolicy::none());
        auto scored = make_scored_set(scores, valid_labels);
        m.roc_auc = has_both_classes(scored) ? roc_auc(scored) : std::numeric_limits<double>::quiet_NaN();
        m.neg_pr_auc = has_bad(scored) ? neg_pr_auc(scored) : std::numeric_limits<double>::quiet_NaN();
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(m);
        if (on_epoch) {
            on_epoch(m);
        }

        if (m.roc_auc > best_auc || (std::isnan(m.roc_auc) && epoch == 1)) {
            best_auc = std::isnan(m.roc_auc) ? best_auc : m.roc_auc;
            result.model = model;
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= config.patience) {
            break;
        }
    }
    return result;
}

void write_metrics_log(std::ostream& out, const std::vector<EpochMetrics>& history)
{
    for (const auto& m : history) {
        nlohmann::json j = {{"epoch", m.epoch},           {"loss", m.loss},
                            {"valid_loss", m.valid_loss}, {"roc_auc", m.roc_auc},
                            {"neg_pr_auc", m.neg_pr_auc}, {"seconds", m.seconds}};
        out << j.dump() << '\n';
    }
}

}  // namespace deepbow
