#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "deepbow/model.hpp"

namespace deepbow {

struct RelevanceExample {
    std::string query;
    std::string product;
    int label = 0;  // 1 = Good, 0 = Bad

    friend bool operator==(const RelevanceExample&, const RelevanceExample&) = default;
};

/// `<query>\t<product>\t<label∈{0,1}>` per line. Throws Error{input} with the
/// line number on malformed rows.
std::vector<RelevanceExample> read_dataset(std::istream& in);
std::vector<RelevanceExample> load_dataset(const std::string& path);
void write_dataset(std::ostream& out, const std::vector<RelevanceExample>& examples);
void save_dataset(const std::string& path, const std::vector<RelevanceExample>& examples);

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_tokens = 4096;
    ScoreMode mode = ScoreMode::q_synonym;
    int max_epochs = 10;
    int patience = 3;
    std::uint64_t seed = 42;
    /// Divisor of the sparsity term; 0 means the full index space v+B.
    double v_norm = 0.0;
    bool use_norm_loss = true;
    bool deterministic = true;
    int threads = 1;

    void validate() const;
};

/// −(y ln p̂ + (1−y) ln(1−p̂)), p̂ = clamp(p, 1e-7, 1−1e-7).
double binary_cross_entropy(double p, int label);
/// d/dp of binary_cross_entropy; zero where the clamp is active.
double binary_cross_entropy_grad(double p, int label);
/// Euclidean norm of a dense expansion.
double l2_norm(const DenseBoW& dense);

inline constexpr double kProbabilityClamp = 1e-7;

struct ExampleFeatures {
    TextFeatures query;
    TextFeatures product;
    int label = 0;

    [[nodiscard]] std::size_t token_count() const noexcept { return query.token_count() + product.token_count(); }
};

/// Featurizes a dataset; examples that segment to nothing are dropped and counted.
std::vector<ExampleFeatures> featurize_examples(const std::vector<RelevanceExample>& examples,
                                                const Vocabulary& vocab, std::size_t max_len,
                                                std::size_t* skipped = nullptr);

struct LossBreakdown {
    double total = 0.0;
    double ce = 0.0;       // CE(R_t) or CE(R_s)
    double ce_avg = 0.0;   // CE(R_avg), q_synonym only
    double norm_term = 0.0;
    double score = 0.0;    // R_t or R_s
    double score_avg = 0.0;
};

/// loss_t (q_weight) or loss_s (q_synonym) of one example. When `grads` is
/// non-null the gradient, multiplied by `grad_scale`, is accumulated into it.
LossBreakdown example_loss(const DeepBowModel& model, const ExampleFeatures& example, const TrainConfig& config,
                           DeepBowModel* grads = nullptr, double grad_scale = 1.0);

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long step = 0;

    static AdamState for_model(const DeepBowModel& model);
};

/// One bias-corrected Adam update. Throws Error{numeric} naming the tensor if
/// any gradient entry is NaN or infinite; parameters are left untouched then.
void adam_step(DeepBowModel& params, const DeepBowModel& grads, AdamState& state, const TrainConfig& config);

/// Groups examples into batches of roughly `budget` tokens, similar lengths
/// together; batch order is shuffled with `seed`.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<ExampleFeatures>& examples,
                                                   std::size_t budget, std::uint64_t seed);

struct EpochMetrics {
    int epoch = 0;
    double loss = 0.0;  // mean training loss over the epoch
    double valid_loss = 0.0;
    double roc_auc = 0.0;
    double neg_pr_auc = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    DeepBowModel model;  // best validation ROC-AUC
    std::vector<EpochMetrics> history;
    int best_epoch = 0;
    std::size_t skipped_examples = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains from `initial`, evaluating validation ROC-AUC after every epoch and
/// stopping after `patience` epochs without improvement or at `max_epochs`.
TrainResult train(const std::vector<RelevanceExample>& train_set, const std::vector<RelevanceExample>& valid_set,
                  const Vocabulary& vocab, DeepBowModel initial, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Library-path relevance scores (sparse representations, `policy` applied)
/// for pre-featurized examples, in order.
std::vector<double> score_examples(const DeepBowModel& model, const std::vector<ExampleFeatures>& examples,
                                   ScoreMode mode, const TruncationPolicy& policy);

/// One JSON object per line: epoch, loss, roc_auc, neg_pr_auc (plus extras).
void write_metrics_log(std::ostream& out, const std::vector<EpochMetrics>& history);

}  // namespace deepbow
