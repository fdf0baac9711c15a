#include "fedsim/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "fedsim/meta.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::unique_ptr<IStrategy> make_strategy(const ExperimentConfig& cfg, const LayoutPtr& layout,
                                         const PartitionIndex* partition) {
    const ServerOptState opt = ServerOptState::init(cfg.server_config(), layout);
    switch (cfg.strategy) {
        case StrategyKind::kFedAvg:
            return std::make_unique<BaselineStrategy>("fedavg", AggregatorKind::kFedAvg, opt);
        case StrategyKind::kFedNova:
            return std::make_unique<BaselineStrategy>("fednova", AggregatorKind::kFedNova, opt);
        case StrategyKind::kFedAdagrad:
            return std::make_unique<BaselineStrategy>("fedadagrad", AggregatorKind::kFedAvg, opt);
        case StrategyKind::kFedAdam:
            return std::make_unique<BaselineStrategy>("fedadam", AggregatorKind::kFedAvg, opt);
        case StrategyKind::kMetaUA: {
            const MetaParams theta =
                MetaParams::init(partition->cell_count(), cfg.attributes.size());
            return std::make_unique<MetaUAStrategy>(theta, opt, partition, cfg.meta_config());
        }
    }
    throw std::logic_error("unreachable strategy kind");
}

struct EvalData {
    // pooled view
    std::vector<Example> examples;
    std::vector<std::uint8_t> labels;
    // per-client slices into examples
    std::vector<std::pair<std::size_t, std::size_t>> client_ranges;
};

EvalData collect_validation(const Federation& fed) {
    EvalData ev;
    for (const ClientDataset& c : fed.clients) {
        const std::size_t begin = ev.examples.size();
        for (const Example& x : c.validation) {
            ev.examples.push_back(x);
            ev.labels.push_back(x.label);
        }
        ev.client_ranges.emplace_back(begin, ev.examples.size());
    }
    return ev;
}

void evaluate(const ParamVector& w, const ModelSpec& spec, const EvalData& ev,
              bool per_client, RoundMetrics& out) {
    if (ev.examples.empty()) {
        out.logloss = 0.0;
        return;
    }
    const std::vector<double> scores = predict_batch(w, ev.examples, spec);
    if (!per_client) {
        out.auc = auc(scores, ev.labels);
        out.logloss = logloss(scores, ev.labels);
        return;
    }
    double auc_sum = 0.0, ll_sum = 0.0;
    std::size_t auc_n = 0, ll_n = 0;
    for (const auto& [begin, end] : ev.client_ranges) {
        if (begin == end) continue;
        const std::span<const double> s(scores.data() + begin, end - begin);
        const std::span<const std::uint8_t> l(ev.labels.data() + begin, end - begin);
        if (const std::optional<double> a = auc(s, l)) {
            auc_sum += *a;
            ++auc_n;
        }
        ll_sum += logloss(s, l);
        ++ll_n;
    }
    if (auc_n) out.auc = auc_sum / static_cast<double>(auc_n);
    if (ll_n) out.logloss = ll_sum / static_cast<double>(ll_n);
}

}  // namespace

Federation build_federation(const ExperimentConfig& cfg) {
    if (cfg.data_source == "csv") return load_csv(cfg.csv_path);
    SyntheticConfig synth = cfg.synth;
    synth.seed = cfg.seed;
    return generate_synthetic(synth);
}

ModelSpec build_model_spec(const ExperimentConfig& cfg, const Federation& fed) {
    ModelSpec spec;
    spec.fields = fed.fields;
    spec.embed_dim = cfg.embed_dim;
    spec.cross_layers = cfg.cross_layers;
    spec.hidden = cfg.hidden;
    spec.validate();
    return spec;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Federation& fed) {
    cfg.validate();
    const ModelSpec spec = build_model_spec(cfg, fed);
    const LayoutPtr layout = build_layout(spec);
    PartitionIndex partition(layerwise_partition(*layout), layout);
    ParamVector w0 = init_params(spec, cfg.seed);

    SimState state(fed.clients, spec, std::move(partition), std::move(w0));
    std::unique_ptr<IStrategy> strategy = make_strategy(cfg, layout, &state.partition);

    SimConfig sim;
    sim.client_fraction = cfg.fraction;
    sim.local = cfg.local;
    sim.attrs = cfg.attributes;
    sim.seed = cfg.seed;

    const EvalData ev = collect_validation(fed);

    ExperimentResult result;
    result.cfg = cfg;
    result.rounds.reserve(cfg.rounds);
    for (std::size_t t = 1; t <= cfg.rounds; ++t) {
        const RoundResult rr = run_round(state, *strategy, sim);
        RoundMetrics m;
        m.round = t;
        m.clients = rr.participants;
        m.uplink_bytes = rr.uplink_bytes;
        evaluate(state.w, spec, ev, cfg.per_client_eval, m);
        strategy->diagnostics(m.strategy_diag);
        if (result.diag_columns.empty())
            for (const auto& [name, _] : m.strategy_diag) result.diag_columns.push_back(name);
        result.rounds.push_back(std::move(m));
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    return run_experiment(cfg, build_federation(cfg));
}

std::string metrics_csv_text(const ExperimentResult& result) {
    std::ostringstream out;
    out << "round,clients,auc,logloss,uplink_bytes";
    for (const std::string& c : result.diag_columns) out << ',' << c;
    out << '\n';
    for (const RoundMetrics& m : result.rounds) {
        out << m.round << ',' << m.clients << ','
            << (m.auc ? fmt_double(*m.auc) : std::string()) << ',' << fmt_double(m.logloss) << ','
            << m.uplink_bytes;
        for (const auto& [_, v] : m.strategy_diag) out << ',' << fmt_double(v);
        out << '\n';
    }
    return out.str();
}

std::string summary_json_text(const ExperimentResult& result) {
    nlohmann::ordered_json j;
    j["strategy"] = std::string(strategy_name(result.cfg.strategy));
    j["rounds"] = result.rounds.size();
    j["seed"] = result.cfg.seed;
    const RoundMetrics& last = result.rounds.back();
    j["final"]["round"] = last.round;
    if (last.auc) j["final"]["auc"] = *last.auc;
    j["final"]["logloss"] = last.logloss;
    std::uint64_t uplink_total = 0;
    for (const RoundMetrics& m : result.rounds) uplink_total += m.uplink_bytes;
    j["uplink_bytes_total"] = uplink_total;
    nlohmann::ordered_json checkpoints = nlohmann::ordered_json::array();
    for (std::size_t r : kCheckpointRounds) {
        if (r > result.rounds.size()) continue;
        const RoundMetrics& m = result.rounds[r - 1];
        nlohmann::ordered_json row;
        row["round"] = r;
        if (m.auc) row["auc"] = *m.auc;
        row["logloss"] = m.logloss;
        checkpoints.push_back(std::move(row));
    }
    j["checkpoints"] = std::move(checkpoints);
    return j.dump(2) + "\n";
}

void write_outputs(const ExperimentResult& result, const std::string& output_dir) {
    std::filesystem::create_directories(output_dir);
    std::ofstream csv(output_dir + "/metrics.csv", std::ios::binary);
    csv << metrics_csv_text(result);
    std::ofstream json(output_dir + "/summary.json", std::ios::binary);
    json << summary_json_text(result);
}

CompareResult compare(const std::vector<ExperimentConfig>& cfgs) {
    if (cfgs.empty()) throw ConfigError("compare: no configs");
    const ExperimentConfig& head = cfgs.front();
    for (const ExperimentConfig& c : cfgs) {
        c.validate();
        const bool same_source =
            c.data_source == head.data_source && c.csv_path == head.csv_path &&
            c.seed == head.seed && c.synth.n_clients == head.synth.n_clients &&
            c.synth.samples_mu == head.synth.samples_mu &&
            c.synth.samples_sigma == head.synth.samples_sigma &&
            c.synth.n_items == head.synth.n_items &&
            c.synth.n_context_values == head.synth.n_context_values &&
            c.synth.label_shift_std == head.synth.label_shift_std &&
            c.synth.preference_dim == head.synth.preference_dim;
        if (!same_source) throw ConfigError("compare: configs must share data source and seed");
    }
    const Federation fed = build_federation(head);
    CompareResult result;
    result.runs.reserve(cfgs.size());
    for (const ExperimentConfig& c : cfgs) result.runs.push_back(run_experiment(c, fed));
    return result;
}

std::string compare_csv_text(const CompareResult& result) {
    std::size_t max_rounds = 0;
    for (const ExperimentResult& r : result.runs) max_rounds = std::max(max_rounds, r.rounds.size());
    std::ostringstream out;
    out << "round";
    for (const ExperimentResult& r : result.runs) {
        const std::string_view n = strategy_name(r.cfg.strategy);
        out << ',' << n << ".auc," << n << ".logloss," << n << ".uplink_bytes";
    }
    out << '\n';
    for (std::size_t i = 0; i < max_rounds; ++i) {
        out << (i + 1);
        for (const ExperimentResult& r : result.runs) {
            if (i < r.rounds.size()) {
                const RoundMetrics& m = r.rounds[i];
                out << ',' << (m.auc ? fmt_double(*m.auc) : std::string()) << ','
                    << fmt_double(m.logloss) << ',' << m.uplink_bytes;
            } else {
                out << ",,,";
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string compare_summary_text(const CompareResult& result) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (std::size_t r : kCheckpointRounds) {
        nlohmann::ordered_json row;
        row["round"] = r;
        bool any = false;
        for (const ExperimentResult& run : result.runs) {
            if (r > run.rounds.size()) continue;
            any = true;
            const RoundMetrics& m = run.rounds[r - 1];
            nlohmann::ordered_json cell;
            if (m.auc) cell["auc"] = *m.auc;
            cell["logloss"] = m.logloss;
            row[std::string(strategy_name(run.cfg.strategy))] = std::move(cell);
        }
        if (any) j.push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

void write_compare_outputs(const CompareResult& result, const std::string& output_dir) {
    std::filesystem::create_directories(output_dir);
    std::ofstream csv(output_dir + "/compare.csv", std::ios::binary);
    csv << compare_csv_text(result);
    std::ofstream json(output_dir + "/compare_summary.json", std::ios::binary);
    json << compare_summary_text(result);
    for (const ExperimentResult& r : result.runs)
        write_outputs(r, output_dir + "/" + std::string(strategy_name(r.cfg.strategy)));
}

SweepResult sweep(const ExperimentConfig& base, const std::string& param,
                  const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("sweep: no values");
    SweepResult result;
    result.param = param;
    result.values = values;
    const Federation fed = build_federation(base);
    for (double v : values) {
        ExperimentConfig cfg = base;
        if (param == "gamma_meta") cfg.gamma_meta = v;
        else if (param == "fraction") cfg.fraction = v;
        else throw ConfigError("sweep: unsupported param '" + param + "'");
        cfg.validate();
        result.runs.push_back(run_experiment(cfg, fed));
    }
    return result;
}

void write_sweep_outputs(const SweepResult& result, const std::string& output_dir) {
    std::filesystem::create_directories(output_dir);
    nlohmann::ordered_json j;
    j["param"] = result.param;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
        const ExperimentResult& r = result.runs[i];
        std::ostringstream dir;
        dir << output_dir << "/" << result.param << "_" << fmt_double(result.values[i]);
        write_outputs(r, dir.str());
        nlohmann::ordered_json row;
        row["value"] = result.values[i];
        const RoundMetrics& last = r.rounds.back();
        if (last.auc) row["final_auc"] = *last.auc;
        row["final_logloss"] = last.logloss;
        rows.push_back(std::move(row));
    }
    j["runs"] = std::move(rows);
    std::ofstream json(output_dir + "/sweep_summary.json", std::ios::binary);
    json << j.dump(2) << "\n";
}

}  // namespace fedsim
