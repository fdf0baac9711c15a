#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/data.hpp"

namespace fedsim {

struct RoundMetrics {
    std::size_t round = 0;
    std::optional<double> auc;  // absent on single-class validation data
    double logloss = 0.0;
    std::size_t clients = 0;
    std::uint64_t uplink_bytes = 0;
    std::vector<std::pair<std::string, double>> strategy_diag;  // theta_s / alpha weights
};

struct ExperimentResult {
    ExperimentConfig cfg;
    std::vector<RoundMetrics> rounds;
    std::vector<std::string> diag_columns;  // stable column order for the csv
};

Federation build_federation(const ExperimentConfig& cfg);
ModelSpec build_model_spec(const ExperimentConfig& cfg, const Federation& fed);

// Runs cfg.rounds rounds and evaluates AUC/logloss on validation data after
// each round (pooled by default, per-client macro-average behind run.eval).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Federation& fed);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes <output_dir>/metrics.csv and <output_dir>/summary.json.
void write_outputs(const ExperimentResult& result, const std::string& output_dir);

std::string metrics_csv_text(const ExperimentResult& result);
std::string summary_json_text(const ExperimentResult& result);

inline constexpr std::size_t kCheckpointRounds[] = {20, 50, 100, 150, 200};

struct CompareResult {
    std::vector<ExperimentResult> runs;
};

// Runs each config on the shared data source (built once); all configs must
// agree on the data source and seed. Emits merged per-round csv plus a
// checkpoint summary mirroring rounds 20/50/100/150/200.
CompareResult compare(const std::vector<ExperimentConfig>& cfgs);
std::string compare_csv_text(const CompareResult& result);
std::string compare_summary_text(const CompareResult& result);
void write_compare_outputs(const CompareResult& result, const std::string& output_dir);

struct SweepResult {
    std::string param;
    std::vector<double> values;
    std::vector<ExperimentResult> runs;
};

// param is "gamma_meta" or "fraction"; one run per value.
SweepResult sweep(const ExperimentConfig& base, const std::string& param,
                  const std::vector<double>& values);
void write_sweep_outputs(const SweepResult& result, const std::string& output_dir);

}  // namespace fedsim
