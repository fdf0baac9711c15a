#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "fedsim/aggregation.hpp"
#include "fedsim/flsim.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

ModelSpec small_spec() {
    ModelSpec spec;
    spec.fields = {{"u", 4}, {"i", 3}};
    spec.embed_dim = 2;
    spec.hidden = {3};
    return spec;
}

Example ex(std::uint32_t u, std::uint32_t i, int label, std::int64_t ts) {
    Example x;
    x.feature_ids = {u, i};
    x.label = static_cast<std::uint8_t>(label);
    x.timestamp = ts;
    return x;
}

ClientDataset toy_client(ClientId id, std::size_t n, Rng& rng) {
    std::vector<Example> rows;
    for (std::size_t t = 0; t < n; ++t)
        rows.push_back(ex(static_cast<std::uint32_t>(rng.uniform_below(4)),
                          static_cast<std::uint32_t>(rng.uniform_below(3)),
                          static_cast<int>(rng.uniform_below(2)), static_cast<std::int64_t>(t)));
    return make_client_dataset(id, std::move(rows));
}

PartitionIndex make_partition(const LayoutPtr& layout) {
    return {layerwise_partition(*layout), layout};
}

}  // namespace

TEST_CASE("client splits: last 10% validation, last 20% of the rest query") {
    std::vector<Example> rows;
    for (int t = 0; t < 20; ++t) rows.push_back(ex(0, 0, t % 2, 19 - t));  // reversed order
    const ClientDataset ds = make_client_dataset(3, std::move(rows));
    CHECK(ds.validation.size() == 2);
    CHECK(ds.query.size() == 3);   // train 18, query 18/5
    CHECK(ds.support.size() == 15);
    // timestamp ordering: every validation example is later than any train one
    for (const Example& v : ds.validation) {
        for (const Example& s : ds.support) CHECK(v.timestamp >= s.timestamp);
        for (const Example& q : ds.query) CHECK(v.timestamp >= q.timestamp);
    }
    for (const Example& q : ds.query)
        for (const Example& s : ds.support) CHECK(q.timestamp >= s.timestamp);
}

TEST_CASE("sample_clients sizes and determinism") {
    std::vector<ClientId> universe(100);
    std::iota(universe.begin(), universe.end(), 0);

    SUBCASE("fraction 1.0 selects the whole universe") {
        Rng rng(1);
        const std::vector<ClientId> s = sample_clients(universe, 1.0, rng);
        CHECK(s == universe);
    }
    SUBCASE("fraction 0.1 over 100 clients selects exactly 10 distinct ids") {
        Rng rng(2);
        const std::vector<ClientId> s = sample_clients(universe, 0.1, rng);
        CHECK(s.size() == 10);
        for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i - 1] < s[i]);
    }
    SUBCASE("deterministic per rng state") {
        Rng a(3), b(3);
        CHECK(sample_clients(universe, 0.2, a) == sample_clients(universe, 0.2, b));
    }
    SUBCASE("empty universe is an error") {
        Rng rng(4);
        CHECK_THROWS_AS(sample_clients({}, 0.5, rng), std::invalid_argument);
    }
    SUBCASE("tiny fraction still selects one client") {
        Rng rng(5);
        CHECK(sample_clients(universe, 0.001, rng).size() == 1);
    }
}

TEST_CASE("per-client inclusion frequency is uniform within 3 sigma") {
    std::vector<ClientId> universe(100);
    std::iota(universe.begin(), universe.end(), 0);
    Rng rng(6);
    std::vector<std::size_t> counts(universe.size(), 0);
    const int rounds = 10000;
    for (int r = 0; r < rounds; ++r)
        for (ClientId id : sample_clients(universe, 0.1, rng)) ++counts[id];
    const double expected = rounds * 0.1;
    const double sigma = std::sqrt(rounds * 0.1 * 0.9);
    for (std::size_t id = 0; id < counts.size(); ++id)
        CHECK(std::abs(static_cast<double>(counts[id]) - expected) <= 3.0 * sigma);
}

TEST_CASE("local_train with lr 0 returns a zero delta and the exact step count") {
    const ModelSpec spec = small_spec();
    const ParamVector w = init_params(spec, 9);
    Rng data_rng(10);
    const ClientDataset ds = toy_client(0, 40, data_rng);  // support 29
    LocalTrainConfig cfg;
    cfg.lr = 0.0;
    cfg.batch_size = 15;
    cfg.epochs = 3;
    Rng rng(11);
    const LocalTrainResult res = local_train(w, ds, cfg, spec, rng);
    CHECK(res.local_steps == 3 * ((ds.support.size() + 14) / 15));
    for (double v : res.delta.values()) CHECK(v == 0.0);
}

TEST_CASE("one example, one epoch, batch 15 is a single step") {
    const ModelSpec spec = small_spec();
    const ParamVector w = init_params(spec, 12);
    std::vector<Example> rows = {ex(0, 0, 1, 0)};
    const ClientDataset ds = make_client_dataset(0, std::move(rows));
    REQUIRE(ds.support.size() == 1);
    LocalTrainConfig cfg;
    cfg.epochs = 1;
    Rng rng(13);
    CHECK(local_train(w, ds, cfg, spec, rng).local_steps == 1);
}

TEST_CASE("tau equals epochs times ceil(support/batch) over random sizes") {
    const ModelSpec spec = small_spec();
    const ParamVector w = init_params(spec, 14);
    Rng rng(15);
    for (int it = 0; it < 20; ++it) {
        Rng data_rng(100 + it);
        const ClientDataset ds = toy_client(0, 2 + data_rng.uniform_below(60), data_rng);
        if (ds.support.empty()) continue;
        LocalTrainConfig cfg;
        cfg.batch_size = 1 + rng.uniform_below(20);
        cfg.epochs = 1 + rng.uniform_below(4);
        Rng train_rng(16);
        const LocalTrainResult res = local_train(w, ds, cfg, spec, train_rng);
        const std::size_t batches = (ds.support.size() + cfg.batch_size - 1) / cfg.batch_size;
        CHECK(res.local_steps == cfg.epochs * batches);
    }
}

TEST_CASE("local_train reduces the support loss on a separable toy set") {
    ModelSpec spec;
    spec.fields = {{"u", 2}, {"i", 2}};
    spec.embed_dim = 2;
    spec.hidden = {4};
    const ParamVector w = init_params(spec, 17);
    // label perfectly determined by the item feature
    std::vector<Example> rows;
    Rng data_rng(18);
    for (int t = 0; t < 50; ++t) {
        const auto item = static_cast<std::uint32_t>(data_rng.uniform_below(2));
        rows.push_back(ex(static_cast<std::uint32_t>(data_rng.uniform_below(2)), item,
                          static_cast<int>(item), t));
    }
    const ClientDataset ds = make_client_dataset(0, std::move(rows));
    LocalTrainConfig cfg;
    cfg.lr = 0.1;
    cfg.epochs = 5;
    Rng rng(19);
    const double before = loss_and_grad(w, ds.support, spec).loss;
    const LocalTrainResult res = local_train(w, ds, cfg, spec, rng);
    const double after = loss_and_grad(add(w, res.delta), ds.support, spec).loss;
    CHECK(after <= before);
}

TEST_CASE("local_train never mutates the incoming global weights") {
    const ModelSpec spec = small_spec();
    const ParamVector w = init_params(spec, 20);
    const std::vector<double> before(w.values().begin(), w.values().end());
    Rng data_rng(21);
    const ClientDataset ds = toy_client(0, 30, data_rng);
    LocalTrainConfig cfg;
    Rng rng(22);
    (void)local_train(w, ds, cfg, spec, rng);
    CHECK(std::memcmp(before.data(), w.data(), before.size() * sizeof(double)) == 0);
}

TEST_CASE("query_gradient is a sum at the distributed weights") {
    const ModelSpec spec = small_spec();
    const ParamVector w = init_params(spec, 23);
    Rng data_rng(24);
    const ClientDataset ds = toy_client(0, 40, data_rng);
    REQUIRE(!ds.query.empty());

    const QueryGradient qg = query_gradient(w, ds, spec);
    CHECK(qg.present);

    // sum-vs-mean identity, bitwise
    LossGrad mean = loss_and_grad(w, ds.query, spec);
    scale_in_place(mean.grad, static_cast<double>(ds.query.size()));
    CHECK(std::memcmp(qg.grad.data(), mean.grad.data(), qg.grad.size() * sizeof(double)) == 0);

    // unchanged by local training happening around it
    LocalTrainConfig cfg;
    Rng rng(25);
    (void)local_train(w, ds, cfg, spec, rng);
    const QueryGradient again = query_gradient(w, ds, spec);
    CHECK(std::memcmp(qg.grad.data(), again.grad.data(), qg.grad.size() * sizeof(double)) == 0);
}

TEST_CASE("empty query set yields a flagged zero vector") {
    const ModelSpec spec = small_spec();
    const ParamVector w = init_params(spec, 26);
    std::vector<Example> rows = {ex(0, 0, 1, 0), ex(1, 1, 0, 1)};
    const ClientDataset ds = make_client_dataset(0, std::move(rows));
    REQUIRE(ds.query.empty());
    const QueryGradient qg = query_gradient(w, ds, spec);
    CHECK_FALSE(qg.present);
    for (double v : qg.grad.values()) CHECK(v == 0.0);
}

TEST_CASE("zero-weight model has zero output-bias query gradient under balanced labels") {
    const ModelSpec spec = small_spec();
    const ParamVector w(build_layout(spec));  // all zeros, p = 0.5 everywhere
    std::vector<Example> rows;
    for (int t = 0; t < 22; ++t) rows.push_back(ex(0, 0, t % 2, t));
    const ClientDataset ds = make_client_dataset(0, std::move(rows));
    REQUIRE(ds.query.size() == 4);  // alternating labels leave the query balanced
    const QueryGradient qg = query_gradient(w, ds, spec);
    // per-example dz = p - y alternates +-0.5 and cancels on the bias
    CHECK(qg.grad.block("out.b")[0] == 0.0);
}

TEST_CASE("compute_attributes covers the documented cases") {
    const ModelSpec spec = small_spec();
    const LayoutPtr layout = build_layout(spec);
    const PartitionIndex partition = make_partition(layout);

    std::vector<Example> rows = {ex(0, 0, 1, 0), ex(1, 1, 1, 1), ex(0, 2, 1, 2),
                                 ex(2, 0, 1, 3), ex(3, 1, 1, 4)};
    const ClientDataset ds = make_client_dataset(0, std::move(rows));

    ParamVector qgrad(layout);
    for (std::size_t i = 0; i < qgrad.size(); ++i) qgrad[i] = static_cast<double>(i % 3) - 1.0;

    AttrInputs in;
    in.ds = &ds;
    in.query_grad = &qgrad;
    in.local_steps = 4;
    in.pre_loss = 0.8;
    in.post_loss = 0.8;  // untouched model
    in.local_loss = 0.75;

    const AttrSet attrs = {Attr::kZ1SampleCount, Attr::kZ2LocalLoss, Attr::kZ3GradNorm,
                           Attr::kZ4LossRatio, Attr::kZ5PositiveRate, Attr::kZ6UniqueFeatures};
    const ClientAttributes z = compute_attributes(attrs, in, partition);
    REQUIRE(z.cell_count() == partition.cell_count());
    REQUIRE(z.attr_count() == 6);

    CHECK(z.at(0, 0) == static_cast<double>(ds.n_samples()));
    CHECK(z.at(0, 1) == 0.75);
    CHECK(z.at(0, 3) == 1.0);  // equal losses
    CHECK(z.at(0, 4) == 1.0);  // all-positive labels
    // z6 hand count over support+query rows: u ids {0,1,2,3}, i ids {0,1,2}
    CHECK(z.at(0, 5) == 7.0);
    // z3 is per cell and matches the restricted norms
    for (std::size_t c = 0; c < partition.cell_count(); ++c) {
        CHECK(z.at(c, 2) == doctest::Approx(std::sqrt(partition.cell_sq_norm(c, qgrad))));
        CHECK(z.at(c, 0) == z.at(0, 0));  // broadcast attrs identical across cells
    }

    AttrInputs zero_pre = in;
    zero_pre.pre_loss = 0.0;
    const ClientAttributes z2 = compute_attributes({Attr::kZ4LossRatio}, zero_pre, partition);
    CHECK(z2.at(0, 0) == 1.0);  // defined as 1 when pre_loss is 0
}

TEST_CASE("identical client data produces identical deltas in a round") {
    const ModelSpec spec = small_spec();
    const LayoutPtr layout = build_layout(spec);

    Rng data_rng(27);
    std::vector<Example> rows;
    for (int t = 0; t < 30; ++t)
        rows.push_back(ex(static_cast<std::uint32_t>(data_rng.uniform_below(4)),
                          static_cast<std::uint32_t>(data_rng.uniform_below(3)),
                          static_cast<int>(data_rng.uniform_below(2)), t));
    std::vector<ClientDataset> clients;
    for (ClientId id = 0; id < 4; ++id) {
        ClientDataset c = make_client_dataset(id, rows);
        clients.push_back(std::move(c));
    }

    SimState state(clients, spec, make_partition(layout), init_params(spec, 28));
    struct Capture final : IStrategy {
        std::vector<ParamVector> deltas;
        std::string_view name() const override { return "capture"; }
        StrategyNeeds needs() const override { return {false, false}; }
        int uplink_vectors_per_client() const override { return 1; }
        ParamVector round(const ParamVector& w, std::span<const ClientRoundOutput> outputs,
                          const ParamVector&) override {
            for (const ClientRoundOutput& o : outputs) deltas.push_back(o.delta);
            return w;
        }
    } capture;
    SimConfig sim;
    sim.client_fraction = 1.0;
    sim.seed = 29;
    run_round(state, capture, sim);
    REQUIRE(capture.deltas.size() == 4);
    for (std::size_t k = 1; k < capture.deltas.size(); ++k)
        CHECK(std::memcmp(capture.deltas[0].data(), capture.deltas[k].data(),
                          capture.deltas[0].size() * sizeof(double)) == 0);
}

TEST_CASE("fedavg round with one client applies its delta via sgd") {
    const ModelSpec spec = small_spec();
    const LayoutPtr layout = build_layout(spec);
    Rng data_rng(30);
    std::vector<ClientDataset> clients;
    clients.push_back(toy_client(0, 40, data_rng));

    SimState state(clients, spec, make_partition(layout), init_params(spec, 31));
    const ParamVector w0 = state.w;

    ServerOptConfig opt;
    opt.kind = ServerOptKind::kSgd;
    opt.gamma_s = 1.0;
    BaselineStrategy strat("fedavg", AggregatorKind::kFedAvg,
                           ServerOptState::init(opt, layout));
    SimConfig sim;
    sim.client_fraction = 1.0;
    sim.seed = 32;
    const RoundResult rr = run_round(state, strat, sim);
    CHECK(rr.participants == 1);
    CHECK(rr.uplink_bytes == layout->size() * sizeof(double));

    // replay the same client computation
    Rng train_rng(derive_seed(sim.seed, 1, 0x70CA1));
    const LocalTrainResult local = local_train(w0, clients[0], sim.local, spec, train_rng);
    const ParamVector expected = add(w0, local.delta);
    CHECK(std::memcmp(state.w.data(), expected.data(), expected.size() * sizeof(double)) == 0);
}

TEST_CASE("a universe with no trainable clients is a warned no-op") {
    const ModelSpec spec = small_spec();
    const LayoutPtr layout = build_layout(spec);
    std::vector<ClientDataset> clients;
    ClientDataset empty;
    empty.client_id = 0;  // no support examples
    clients.push_back(std::move(empty));

    SimState state(clients, spec, make_partition(layout), init_params(spec, 33));
    ServerOptConfig opt;
    BaselineStrategy strat("fedavg", AggregatorKind::kFedAvg, ServerOptState::init(opt, layout));
    SimConfig sim;
    const RoundResult rr = run_round(state, strat, sim);
    CHECK(rr.no_op);
    CHECK(rr.participants == 0);
    CHECK(state.t == 2);
}
