#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/aggregation.hpp"
#include "fedsim/data.hpp"
#include "fedsim/flsim.hpp"
#include "fedsim/meta.hpp"

namespace fedsim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class StrategyKind { kFedAvg, kFedNova, kFedAdagrad, kFedAdam, kMetaUA };

std::string_view strategy_name(StrategyKind k);
std::optional<StrategyKind> strategy_from_name(std::string_view s);

// Full experiment description. Every field has a default so a minimal config
// file runs.
struct ExperimentConfig {
    // [data]
    std::string data_source = "synthetic";  // "synthetic" | "csv"
    std::string csv_path;
    SyntheticConfig synth;

    // [model]
    std::size_t embed_dim = 4;
    int cross_layers = 0;
    std::vector<std::size_t> hidden = {16, 8};

    // [local]
    LocalTrainConfig local;

    // [server] hyper-parameters; kind/gamma_s fall back to per-strategy presets
    std::optional<ServerOptKind> server_kind;
    std::optional<double> gamma_s;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;

    // [run]
    StrategyKind strategy = StrategyKind::kFedAdagrad;
    std::size_t rounds = 200;
    double fraction = 0.1;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    bool per_client_eval = false;  // macro-average instead of pooled validation

    // [meta]
    double gamma_meta = 0.1;
    double rho_clip = 0.15;
    double alpha_clip = 0.05;
    AttrSet attributes = {Attr::kZ2LocalLoss};
    bool ablation_weighting = true;
    bool ablation_scaling = true;

    void validate() const;  // throws ConfigError
    // Presets: sgd strategies step with gamma_s = 1 (the literal w + delta
    // form); adaptive ones default to gamma_s = 0.1.
    ServerOptConfig server_config() const;
    MetaConfig meta_config() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

}  // namespace fedsim
