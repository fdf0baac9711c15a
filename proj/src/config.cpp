#include "fedsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace fedsim {

std::string_view strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::kFedAvg: return "fedavg";
        case StrategyKind::kFedNova: return "fednova";
        case StrategyKind::kFedAdagrad: return "fedadagrad";
        case StrategyKind::kFedAdam: return "fedadam";
        case StrategyKind::kMetaUA: return "metaua";
    }
    return "?";
}

std::optional<StrategyKind> strategy_from_name(std::string_view s) {
    for (StrategyKind k : {StrategyKind::kFedAvg, StrategyKind::kFedNova,
                           StrategyKind::kFedAdagrad, StrategyKind::kFedAdam,
                           StrategyKind::kMetaUA})
        if (strategy_name(k) == s) return k;
    return std::nullopt;
}

void ExperimentConfig::validate() const {
    if (data_source != "synthetic" && data_source != "csv")
        throw ConfigError("data.source must be 'synthetic' or 'csv'");
    if (data_source == "csv" && csv_path.empty())
        throw ConfigError("data.csv_path is required for csv source");
    if (rounds < 1) throw ConfigError("run.rounds must be >= 1");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("run.fraction must be in (0, 1]");
    if (embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
    if (cross_layers != 0 && cross_layers != 1)
        throw ConfigError("model.cross_layers must be 0 or 1");
    if (local.lr < 0.0 || local.batch_size == 0 || local.epochs == 0)
        throw ConfigError("local train parameters must be positive");
    if (gamma_meta < 0.0) throw ConfigError("meta.gamma_meta must be >= 0");
    try {
        if (data_source == "synthetic") synth.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
}

ServerOptConfig ExperimentConfig::server_config() const {
    ServerOptConfig cfg;
    switch (strategy) {
        case StrategyKind::kFedAvg:
        case StrategyKind::kFedNova:
            cfg.kind = ServerOptKind::kSgd;
            cfg.gamma_s = 1.0;
            break;
        case StrategyKind::kFedAdagrad:
        case StrategyKind::kMetaUA:
            cfg.kind = ServerOptKind::kAdagrad;
            cfg.gamma_s = 0.1;
            break;
        case StrategyKind::kFedAdam:
            cfg.kind = ServerOptKind::kAdam;
            cfg.gamma_s = 0.1;
            break;
    }
    if (server_kind) cfg.kind = *server_kind;
    if (gamma_s) cfg.gamma_s = *gamma_s;
    cfg.beta1 = beta1;
    cfg.beta2 = beta2;
    cfg.epsilon = epsilon;
    return cfg;
}

MetaConfig ExperimentConfig::meta_config() const {
    MetaConfig cfg;
    cfg.gamma_meta = gamma_meta;
    cfg.rho_clip = rho_clip;
    cfg.alpha_clip = alpha_clip;
    cfg.learn_weighting = ablation_weighting;
    cfg.learn_scaling = ablation_scaling;
    return cfg;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Parsed key = value entries with [section] prefixes applied as "section.key".
struct RawConfig {
    std::unordered_map<std::string, std::string> entries;

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    std::string str(const std::string& key) const {
        std::string v = entries.at(key);
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
            v = v.substr(1, v.size() - 2);
        return v;
    }

    double num(const std::string& key) const {
        const std::string v = str(key);
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError("value of '" + key + "' is not a number: " + v);
        }
    }

    bool boolean(const std::string& key) const {
        const std::string v = str(key);
        if (v == "true") return true;
        if (v == "false") return false;
        throw ConfigError("value of '" + key + "' is not a bool: " + v);
    }

    std::vector<std::string> list(const std::string& key) const {
        std::string v = str(key);
        if (v.size() < 2 || v.front() != '[' || v.back() != ']')
            throw ConfigError("value of '" + key + "' is not a [..] list: " + v);
        v = v.substr(1, v.size() - 2);
        std::vector<std::string> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.size() >= 2 && item.front() == '"' && item.back() == '"')
                item = item.substr(1, item.size() - 2);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }
};

RawConfig parse_raw(const std::string& text) {
    RawConfig raw;
    std::string section;
    std::stringstream stream(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
        raw.entries[section.empty() ? key : section + "." + key] = value;
    }
    return raw;
}

const std::vector<std::string> kKnownKeys = {
    "data.source", "data.csv_path", "data.n_clients", "data.samples_mu", "data.samples_sigma",
    "data.n_items", "data.n_context_values", "data.label_shift_std", "data.preference_dim",
    "model.embed_dim", "model.cross_layers", "model.hidden",
    "local.lr", "local.batch_size", "local.epochs",
    "server.kind", "server.gamma_s", "server.beta1", "server.beta2", "server.epsilon",
    "run.strategy", "run.rounds", "run.fraction", "run.seed", "run.output_dir", "run.eval",
    "meta.gamma_meta", "meta.rho_clip", "meta.alpha_clip", "meta.attributes",
    "meta.ablation_weighting",
    "meta.ablation_scaling",
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    const RawConfig raw = parse_raw(text);
    for (const auto& [key, value] : raw.entries)
        if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end())
            throw ConfigError("unknown config key: " + key);

    ExperimentConfig cfg;
    if (raw.has("data.source")) cfg.data_source = raw.str("data.source");
    if (raw.has("data.csv_path")) cfg.csv_path = raw.str("data.csv_path");
    if (raw.has("data.n_clients"))
        cfg.synth.n_clients = static_cast<std::size_t>(raw.num("data.n_clients"));
    if (raw.has("data.samples_mu")) cfg.synth.samples_mu = raw.num("data.samples_mu");
    if (raw.has("data.samples_sigma")) cfg.synth.samples_sigma = raw.num("data.samples_sigma");
    if (raw.has("data.n_items"))
        cfg.synth.n_items = static_cast<std::size_t>(raw.num("data.n_items"));
    if (raw.has("data.n_context_values"))
        cfg.synth.n_context_values = static_cast<std::size_t>(raw.num("data.n_context_values"));
    if (raw.has("data.label_shift_std")) cfg.synth.label_shift_std = raw.num("data.label_shift_std");
    if (raw.has("data.preference_dim"))
        cfg.synth.preference_dim = static_cast<std::size_t>(raw.num("data.preference_dim"));

    if (raw.has("model.embed_dim"))
        cfg.embed_dim = static_cast<std::size_t>(raw.num("model.embed_dim"));
    if (raw.has("model.cross_layers")) cfg.cross_layers = static_cast<int>(raw.num("model.cross_layers"));
    if (raw.has("model.hidden")) {
        cfg.hidden.clear();
        for (const std::string& h : raw.list("model.hidden"))
            cfg.hidden.push_back(static_cast<std::size_t>(std::stod(h)));
    }

    if (raw.has("local.lr")) cfg.local.lr = raw.num("local.lr");
    if (raw.has("local.batch_size"))
        cfg.local.batch_size = static_cast<std::size_t>(raw.num("local.batch_size"));
    if (raw.has("local.epochs")) cfg.local.epochs = static_cast<std::size_t>(raw.num("local.epochs"));

    if (raw.has("server.kind")) {
        const std::string v = raw.str("server.kind");
        if (v == "sgd") cfg.server_kind = ServerOptKind::kSgd;
        else if (v == "adagrad") cfg.server_kind = ServerOptKind::kAdagrad;
        else if (v == "adam") cfg.server_kind = ServerOptKind::kAdam;
        else throw ConfigError("server.kind must be sgd|adagrad|adam");
    }
    if (raw.has("server.gamma_s")) cfg.gamma_s = raw.num("server.gamma_s");
    if (raw.has("server.beta1")) cfg.beta1 = raw.num("server.beta1");
    if (raw.has("server.beta2")) cfg.beta2 = raw.num("server.beta2");
    if (raw.has("server.epsilon")) cfg.epsilon = raw.num("server.epsilon");

    if (raw.has("run.strategy")) {
        const auto k = strategy_from_name(raw.str("run.strategy"));
        if (!k) throw ConfigError("unknown run.strategy: " + raw.str("run.strategy"));
        cfg.strategy = *k;
    }
    if (raw.has("run.rounds")) cfg.rounds = static_cast<std::size_t>(raw.num("run.rounds"));
    if (raw.has("run.fraction")) cfg.fraction = raw.num("run.fraction");
    if (raw.has("run.seed")) cfg.seed = static_cast<std::uint64_t>(raw.num("run.seed"));
    if (raw.has("run.output_dir")) cfg.output_dir = raw.str("run.output_dir");
    if (raw.has("run.eval")) {
        const std::string v = raw.str("run.eval");
        if (v == "pooled") cfg.per_client_eval = false;
        else if (v == "per-client") cfg.per_client_eval = true;
        else throw ConfigError("run.eval must be pooled|per-client");
    }

    if (raw.has("meta.gamma_meta")) cfg.gamma_meta = raw.num("meta.gamma_meta");
    if (raw.has("meta.rho_clip")) cfg.rho_clip = raw.num("meta.rho_clip");
    if (raw.has("meta.alpha_clip")) cfg.alpha_clip = raw.num("meta.alpha_clip");
    if (raw.has("meta.attributes")) {
        cfg.attributes.clear();
        const std::string v = raw.str("meta.attributes");
        if (v != "none") {
            for (const std::string& name : raw.list("meta.attributes")) {
                const auto a = attr_from_name(name);
                if (!a) throw ConfigError("unknown attribute: " + name);
                cfg.attributes.push_back(*a);
            }
            std::sort(cfg.attributes.begin(), cfg.attributes.end());
            cfg.attributes.erase(std::unique(cfg.attributes.begin(), cfg.attributes.end()),
                                 cfg.attributes.end());
        }
    }
    if (raw.has("meta.ablation_weighting"))
        cfg.ablation_weighting = raw.boolean("meta.ablation_weighting");
    if (raw.has("meta.ablation_scaling"))
        cfg.ablation_scaling = raw.boolean("meta.ablation_scaling");

    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

}  // namespace fedsim
