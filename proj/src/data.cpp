#include "fedsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "fedsim/rng.hpp"

namespace fedsim {

void SyntheticConfig::validate() const {
    if (n_clients == 0) throw std::invalid_argument("n_clients must be positive");
    if (n_items == 0) throw std::invalid_argument("n_items must be positive");
    if (n_context_values == 0) throw std::invalid_argument("n_context_values must be positive");
    if (preference_dim == 0) throw std::invalid_argument("preference_dim must be positive");
    if (label_shift_std < 0.0) throw std::invalid_argument("label_shift_std must be >= 0");
}

std::size_t Federation::total_examples() const {
    std::size_t n = 0;
    for (const ClientDataset& c : clients)
        n += c.support.size() + c.query.size() + c.validation.size();
    return n;
}

Federation generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const std::size_t p = cfg.preference_dim;
    const double factor_scale = 1.6 / std::sqrt(static_cast<double>(p));

    Rng world_rng(derive_seed(cfg.seed, 0xD47A));
    std::vector<double> item_factors(cfg.n_items * p);
    for (double& v : item_factors) v = world_rng.normal(0.0, factor_scale);
    std::vector<double> context_effects(cfg.n_context_values);
    for (double& v : context_effects) v = world_rng.normal(0.0, 0.5);

    Federation fed;
    fed.clients.reserve(cfg.n_clients);
    std::vector<double> user(p);
    std::vector<std::uint32_t> pool(cfg.n_items);
    for (std::size_t k = 0; k < cfg.n_clients; ++k) {
        Rng rng(derive_seed(cfg.seed, 0xC11E, k));
        for (double& v : user) v = rng.normal(0.0, factor_scale);
        const double bias = rng.normal(0.0, cfg.label_shift_std);
        const std::size_t count =
            std::max<std::size_t>(1, static_cast<std::size_t>(
                std::llround(rng.lognormal(cfg.samples_mu, cfg.samples_sigma))));

        // each client browses its own item subset; pool sizes vary widely
        for (std::uint32_t i = 0; i < cfg.n_items; ++i) pool[i] = i;
        rng.shuffle(pool);
        const std::size_t pool_size =
            std::max<std::size_t>(2, 2 + rng.uniform_below(cfg.n_items - 1));

        std::vector<Example> rows;
        rows.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            const auto item = pool[rng.uniform_below(pool_size)];
            const auto ctx = static_cast<std::uint32_t>(rng.uniform_below(cfg.n_context_values));
            double logit = bias + context_effects[ctx];
            for (std::size_t j = 0; j < p; ++j) logit += user[j] * item_factors[item * p + j];
            const double prob = 1.0 / (1.0 + std::exp(-logit));
            Example x;
            x.feature_ids = {static_cast<std::uint32_t>(k), item, ctx};
            x.label = rng.uniform01() < prob ? 1 : 0;
            x.timestamp = static_cast<std::int64_t>(i);
            rows.push_back(std::move(x));
        }
        fed.clients.push_back(make_client_dataset(static_cast<ClientId>(k), std::move(rows)));
    }
    fed.fields = {{"user_id", cfg.n_clients}, {"item_id", cfg.n_items},
                  {"ctx", cfg.n_context_values}};
    return fed;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::int64_t parse_int(const std::string& s, std::size_t line_no, const std::string& col) {
    std::int64_t v = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw IngestError(line_no, "column '" + col + "' is not an integer: '" + s + "'");
    return v;
}

}  // namespace

Federation load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw IngestError("empty file: " + path);
    const std::vector<std::string> header = split_line(line);

    const auto col_of = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? header.size()
                                  : static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t user_col = col_of("user_id");
    const std::size_t item_col = col_of("item_id");
    const std::size_t label_col = col_of("label");
    const std::size_t ts_col = col_of("timestamp");
    for (const auto& [name, col] :
         {std::pair{"user_id", user_col}, {"item_id", item_col}, {"label", label_col},
          {"timestamp", ts_col}})
        if (col == header.size()) throw IngestError(1, std::string("missing column '") + name + "'");

    // every non-required column is a categorical context feature, in file order
    std::vector<std::size_t> feature_cols{user_col, item_col};
    std::vector<std::string> feature_names{"user_id", "item_id"};
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == user_col || c == item_col || c == label_col || c == ts_col) continue;
        feature_cols.push_back(c);
        feature_names.push_back(header[c]);
    }

    // first-appearance dictionary per feature column
    std::vector<std::unordered_map<std::string, std::uint32_t>> dicts(feature_cols.size());
    const auto encode = [&](std::size_t f, const std::string& raw) {
        auto [it, inserted] = dicts[f].emplace(raw, static_cast<std::uint32_t>(dicts[f].size()));
        (void)inserted;
        return it->second;
    };

    std::unordered_map<std::uint32_t, std::vector<Example>> by_user;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> cols = split_line(line);
        if (cols.size() != header.size())
            throw IngestError(line_no, "expected " + std::to_string(header.size()) +
                                           " columns, got " + std::to_string(cols.size()));
        const std::int64_t label = parse_int(cols[label_col], line_no, "label");
        if (label != 0 && label != 1)
            throw IngestError(line_no, "label must be 0 or 1, got " + cols[label_col]);
        Example x;
        x.label = static_cast<std::uint8_t>(label);
        x.timestamp = parse_int(cols[ts_col], line_no, "timestamp");
        x.feature_ids.resize(feature_cols.size());
        for (std::size_t f = 0; f < feature_cols.size(); ++f)
            x.feature_ids[f] = encode(f, cols[feature_cols[f]]);
        by_user[x.feature_ids[0]].push_back(std::move(x));
    }
    if (by_user.empty()) throw IngestError("no data rows in " + path);

    Federation fed;
    fed.clients.reserve(by_user.size());
    for (std::uint32_t uid = 0; uid < dicts[0].size(); ++uid)
        fed.clients.push_back(make_client_dataset(uid, std::move(by_user[uid])));
    for (std::size_t f = 0; f < feature_cols.size(); ++f)
        fed.fields.push_back({feature_names[f], dicts[f].size()});
    return fed;
}

void write_csv(const Federation& fed, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path);
    out << fed.fields[0].name;
    for (std::size_t f = 1; f < fed.fields.size(); ++f) out << ',' << fed.fields[f].name;
    out << ",label,timestamp\n";
    for (const ClientDataset& c : fed.clients) {
        const auto dump = [&](const std::vector<Example>& xs) {
            for (const Example& x : xs) {
                out << x.feature_ids[0];
                for (std::size_t f = 1; f < x.feature_ids.size(); ++f)
                    out << ',' << x.feature_ids[f];
                out << ',' << static_cast<int>(x.label) << ',' << x.timestamp << '\n';
            }
        };
        dump(c.support);
        dump(c.query);
        dump(c.validation);
    }
}

}  // namespace fedsim
