#include "fedsim/flsim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

namespace fedsim {

ClientDataset make_client_dataset(ClientId id, std::vector<Example> rows) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Example& a, const Example& b) { return a.timestamp < b.timestamp; });
    ClientDataset ds;
    ds.client_id = id;
    const std::size_t n = rows.size();
    const std::size_t n_val = n / 10;            // last 10%
    const std::size_t n_train = n - n_val;
    const std::size_t n_query = n_train / 5;     // last 20% of the train portion
    const std::size_t n_support = n_train - n_query;
    ds.support.assign(rows.begin(), rows.begin() + n_support);
    ds.query.assign(rows.begin() + n_support, rows.begin() + n_train);
    ds.validation.assign(rows.begin() + n_train, rows.end());
    return ds;
}

std::string_view attr_name(Attr a) {
    switch (a) {
        case Attr::kZ1SampleCount: return "z1";
        case Attr::kZ2LocalLoss: return "z2";
        case Attr::kZ3GradNorm: return "z3";
        case Attr::kZ4LossRatio: return "z4";
        case Attr::kZ5PositiveRate: return "z5";
        case Attr::kZ6UniqueFeatures: return "z6";
    }
    return "?";
}

std::optional<Attr> attr_from_name(std::string_view s) {
    for (Attr a : {Attr::kZ1SampleCount, Attr::kZ2LocalLoss, Attr::kZ3GradNorm,
                   Attr::kZ4LossRatio, Attr::kZ5PositiveRate, Attr::kZ6UniqueFeatures})
        if (attr_name(a) == s) return a;
    return std::nullopt;
}

void LocalTrainConfig::validate() const {
    if (lr < 0.0) throw std::invalid_argument("local lr must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
}

std::vector<ClientId> sample_clients(std::span<const ClientId> universe, double fraction,
                                     Rng& rng) {
    if (universe.empty()) throw std::invalid_argument("sample_clients: empty universe");
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("sample_clients: fraction must be in (0, 1]");
    const std::size_t n = universe.size();
    std::size_t take = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(n)));
    take = std::min(n, std::max<std::size_t>(1, take));

    std::vector<ClientId> pool(universe.begin(), universe.end());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    return pool;
}

LocalTrainResult local_train(const ParamVector& w, const ClientDataset& ds,
                             const LocalTrainConfig& cfg, const ModelSpec& spec, Rng& rng) {
    cfg.validate();
    if (ds.support.empty()) throw std::invalid_argument("local_train: empty support set");

    ParamVector local = w;
    std::vector<std::size_t> order(ds.support.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<Example> batch;
    batch.reserve(std::min(cfg.batch_size, ds.support.size()));

    std::size_t steps = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(ds.support[order[i]]);
            const LossGrad lg = loss_and_grad(local, batch, spec);
            axpy_in_place(local, -cfg.lr, lg.grad);
            ++steps;
        }
    }
    return {sub(local, w), steps};
}

QueryGradient query_gradient(const ParamVector& w, const ClientDataset& ds,
                             const ModelSpec& spec) {
    if (ds.query.empty()) return {ParamVector(w.layout()), false};
    LossGrad lg = loss_and_grad(w, ds.query, spec);
    scale_in_place(lg.grad, static_cast<double>(ds.query.size()));
    return {std::move(lg.grad), true};
}

ClientAttributes compute_attributes(const AttrSet& attrs, const AttrInputs& in,
                                    const PartitionIndex& partition) {
    const std::size_t cells = partition.cell_count();
    ClientAttributes out(cells, attrs.size());
    for (std::size_t j = 0; j < attrs.size(); ++j) {
        switch (attrs[j]) {
            case Attr::kZ1SampleCount: {
                const double v = static_cast<double>(in.ds->n_samples());
                for (std::size_t c = 0; c < cells; ++c) out.at(c, j) = v;
                break;
            }
            case Attr::kZ2LocalLoss: {
                for (std::size_t c = 0; c < cells; ++c) out.at(c, j) = in.local_loss;
                break;
            }
            case Attr::kZ3GradNorm: {
                for (std::size_t c = 0; c < cells; ++c)
                    out.at(c, j) = std::sqrt(partition.cell_sq_norm(c, *in.query_grad));
                break;
            }
            case Attr::kZ4LossRatio: {
                const double v = in.pre_loss == 0.0 ? 1.0 : in.post_loss / in.pre_loss;
                for (std::size_t c = 0; c < cells; ++c) out.at(c, j) = v;
                break;
            }
            case Attr::kZ5PositiveRate: {
                std::size_t pos = 0;
                for (const Example& x : in.ds->support) pos += x.label;
                for (const Example& x : in.ds->query) pos += x.label;
                const std::size_t n = in.ds->n_samples();
                const double v = n ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;
                for (std::size_t c = 0; c < cells; ++c) out.at(c, j) = v;
                break;
            }
            case Attr::kZ6UniqueFeatures: {
                std::set<std::pair<std::size_t, std::uint32_t>> seen;
                auto scan = [&](const std::vector<Example>& xs) {
                    for (const Example& x : xs)
                        for (std::size_t f = 0; f < x.feature_ids.size(); ++f)
                            seen.emplace(f, x.feature_ids[f]);
                };
                scan(in.ds->support);
                scan(in.ds->query);
                const double v = static_cast<double>(seen.size());
                for (std::size_t c = 0; c < cells; ++c) out.at(c, j) = v;
                break;
            }
        }
    }
    return out;
}

SimState::SimState(const std::vector<ClientDataset>& clients_in, ModelSpec spec_in,
                   PartitionIndex partition_in, ParamVector w0)
    : clients(&clients_in),
      spec(std::move(spec_in)),
      partition(std::move(partition_in)),
      w(std::move(w0)) {
    ClientId max_id = 0;
    for (const ClientDataset& ds : clients_in) max_id = std::max(max_id, ds.client_id);
    index_by_id_.assign(static_cast<std::size_t>(max_id) + 1, clients_in.size());
    for (std::size_t i = 0; i < clients_in.size(); ++i) {
        index_by_id_[clients_in[i].client_id] = i;
        if (!clients_in[i].support.empty()) universe.push_back(clients_in[i].client_id);
    }
    std::sort(universe.begin(), universe.end());
}

const ClientDataset& SimState::client(ClientId id) const {
    return (*clients)[index_by_id_[id]];
}

RoundResult run_round(SimState& state, IStrategy& strategy, const SimConfig& cfg) {
    RoundResult result;
    result.round = state.t;
    if (state.universe.empty()) {
        std::cerr << "warning: round " << state.t << " has no trainable clients, skipping\n";
        result.no_op = true;
        ++state.t;
        return result;
    }

    Rng sample_rng(derive_seed(cfg.seed, state.t, 0x5A3));
    const std::vector<ClientId> selected = sample_clients(state.universe, cfg.client_fraction,
                                                          sample_rng);
    const StrategyNeeds needs = strategy.needs();

    std::vector<ClientRoundOutput> outputs;
    outputs.reserve(selected.size());
    ParamVector g_total(state.w.layout());
    for (ClientId id : selected) {  // ascending id
        const ClientDataset& ds = state.client(id);
        // one shared shuffle stream per round keeps homogeneous cohorts symmetric
        Rng train_rng(derive_seed(cfg.seed, state.t, 0x70CA1));
        ClientRoundOutput out;
        out.client_id = id;
        out.n_samples = ds.n_samples();

        double pre_loss = 0.0;
        const bool want_z4 =
            needs.attributes &&
            std::find(cfg.attrs.begin(), cfg.attrs.end(), Attr::kZ4LossRatio) != cfg.attrs.end();
        if (want_z4) pre_loss = loss_and_grad(state.w, ds.support, state.spec).loss;

        LocalTrainResult trained = local_train(state.w, ds, cfg.local, state.spec, train_rng);
        out.delta = std::move(trained.delta);
        out.local_steps = trained.local_steps;

        if (needs.query_gradients) {
            QueryGradient qg = query_gradient(state.w, ds, state.spec);
            out.query_present = qg.present;
            add_in_place(g_total, qg.grad);
            out.query_grad = std::move(qg.grad);
        }
        if (needs.attributes) {
            AttrInputs in;
            in.ds = &ds;
            in.query_grad = &out.query_grad;
            in.local_steps = out.local_steps;
            in.pre_loss = pre_loss;
            if (want_z4) {
                const ParamVector w_after = add(state.w, out.delta);
                in.post_loss = loss_and_grad(w_after, ds.support, state.spec).loss;
            }
            const bool want_z2 = std::find(cfg.attrs.begin(), cfg.attrs.end(),
                                           Attr::kZ2LocalLoss) != cfg.attrs.end();
            if (want_z2) {
                std::vector<Example> local_data = ds.support;
                local_data.insert(local_data.end(), ds.query.begin(), ds.query.end());
                in.local_loss = loss_and_grad(state.w, local_data, state.spec).loss;
            }
            out.attrs = compute_attributes(cfg.attrs, in, state.partition);
        }
        outputs.push_back(std::move(out));
    }

    state.w = strategy.round(state.w, outputs, g_total);
    result.participants = outputs.size();
    result.uplink_bytes = static_cast<std::uint64_t>(outputs.size()) *
                          static_cast<std::uint64_t>(state.w.size()) * sizeof(double) *
                          static_cast<std::uint64_t>(strategy.uplink_vectors_per_client());
    ++state.t;
    return result;
}

}  // namespace fedsim
