#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "deepbow/model.hpp"
#include "deepbow/training.hpp"
#include "deepbow/vocab.hpp"

namespace deepbow {

struct ServeConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = 7878;
    double threshold = 0.5;  // Good iff score >= threshold
};

/// Everything a config file can set. Each store side may carry its own
/// truncation policy; both default to the shared one.
struct AppConfig {
    VocabConfig vocab;
    ModelConfig model;
    TrainConfig train;
    TruncationPolicy query_truncation = TruncationPolicy::threshold(0.4);
    TruncationPolicy product_truncation = TruncationPolicy::threshold(0.4);
    ServeConfig serve;

    [[nodiscard]] const TruncationPolicy& truncation(Side side) const noexcept
    {
        return side == Side::query ? query_truncation : product_truncation;
    }
};

/// Sections {vocab, model, train, truncation, serve}; omitted keys keep their
/// defaults, unknown keys are rejected with Error{config}.
AppConfig parse_config(const nlohmann::json& j);
AppConfig load_config(const std::string& path);
nlohmann::json to_json(const AppConfig& config);

/// "none", "topk:<k>" or "threshold:<tau>".
TruncationPolicy parse_truncation(const std::string& text);

}  // namespace deepbow
