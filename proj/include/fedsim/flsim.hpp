#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/params.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

using ClientId = std::uint32_t;

// Per-client data, split by timestamp: validation is the last 10% of all
// examples; the query set is the last 20% of the remaining train portion.
struct ClientDataset {
    ClientId client_id = 0;
    std::vector<Example> support;
    std::vector<Example> query;
    std::vector<Example> validation;

    std::size_t n_samples() const { return support.size() + query.size(); }
};

// Sorts rows by (timestamp, arrival order) and applies the splits above.
ClientDataset make_client_dataset(ClientId id, std::vector<Example> rows);

// Client attribute kinds fed to the weighting model.
enum class Attr : std::uint8_t {
    kZ1SampleCount,
    kZ2LocalLoss,
    kZ3GradNorm,  // per partition cell; the others are broadcast to all cells
    kZ4LossRatio,
    kZ5PositiveRate,
    kZ6UniqueFeatures,
};

using AttrSet = std::vector<Attr>;

std::string_view attr_name(Attr a);                // "z1".."z6"
std::optional<Attr> attr_from_name(std::string_view);

// Per-cell attribute rows: cells x attrs, row-major. Rows are identical for
// broadcast attributes and differ only in z3 columns.
class ClientAttributes {
public:
    ClientAttributes() = default;
    ClientAttributes(std::size_t cells, std::size_t attrs)
        : cells_(cells), attrs_(attrs), values_(cells * attrs, 0.0) {}

    std::size_t cell_count() const { return cells_; }
    std::size_t attr_count() const { return attrs_; }
    double& at(std::size_t cell, std::size_t attr) { return values_[cell * attrs_ + attr]; }
    double at(std::size_t cell, std::size_t attr) const { return values_[cell * attrs_ + attr]; }

private:
    std::size_t cells_ = 0;
    std::size_t attrs_ = 0;
    std::vector<double> values_;
};

// One client's contribution to a round.
struct ClientRoundOutput {
    ClientId client_id = 0;
    ParamVector delta;       // w_k - w
    ParamVector query_grad;  // sum of per-example gradients on the query set, at w
    bool query_present = false;
    ClientAttributes attrs;
    std::size_t n_samples = 0;   // |support| + |query|
    std::size_t local_steps = 0; // tau_k
};

struct LocalTrainConfig {
    double lr = 0.01;
    std::size_t batch_size = 15;
    std::size_t epochs = 3;

    void validate() const;  // all positive
};

// Uniform sample without replacement of size max(1, round(fraction * |universe|)),
// returned in ascending id order. Throws on an empty universe.
std::vector<ClientId> sample_clients(std::span<const ClientId> universe, double fraction, Rng& rng);

struct LocalTrainResult {
    ParamVector delta;
    std::size_t local_steps = 0;
};

// cfg.epochs passes of minibatch SGD on the support set (reshuffled per epoch
// by rng); the incoming global weights are never modified.
LocalTrainResult local_train(const ParamVector& w, const ClientDataset& ds,
                             const LocalTrainConfig& cfg, const ModelSpec& spec, Rng& rng);

struct QueryGradient {
    ParamVector grad;
    bool present = false;  // false for an empty query set (grad is zero)
};

// Sum (not mean) of per-example loss gradients on the query set, evaluated at
// the distributed weights.
QueryGradient query_gradient(const ParamVector& w, const ClientDataset& ds, const ModelSpec& spec);

// Inputs gathered by run_round that compute_attributes consumes.
struct AttrInputs {
    const ClientDataset* ds = nullptr;
    const ParamVector* query_grad = nullptr;
    std::size_t local_steps = 0;
    double pre_loss = 0.0;   // mean support loss at the distributed weights
    double post_loss = 0.0;  // mean support loss after local training
    double local_loss = 0.0; // mean loss on support+query at the distributed weights
};

ClientAttributes compute_attributes(const AttrSet& attrs, const AttrInputs& in,
                                    const PartitionIndex& partition);

struct StrategyNeeds {
    bool query_gradients = false;
    bool attributes = false;
};

// An aggregation rule plus server optimizer, applied once per round.
class IStrategy {
public:
    virtual ~IStrategy() = default;
    virtual std::string_view name() const = 0;
    virtual StrategyNeeds needs() const = 0;
    virtual int uplink_vectors_per_client() const = 0;
    // Consumes this round's client outputs and returns the new global weights.
    // g_total is the ascending-id sum of the cohort's query gradients (zero
    // vector when not requested via needs()).
    virtual ParamVector round(const ParamVector& w, std::span<const ClientRoundOutput> outputs,
                              const ParamVector& g_total) = 0;
    // Named scalars recorded into per-round metrics (theta_s per cell etc.).
    virtual void diagnostics(std::vector<std::pair<std::string, double>>&) const {}
};

struct SimConfig {
    double client_fraction = 0.1;
    LocalTrainConfig local;
    AttrSet attrs;
    std::uint64_t seed = 1;
};

// Round-loop state. Clients with an empty support set are excluded from the
// sampling universe up front.
struct SimState {
    const std::vector<ClientDataset>* clients = nullptr;
    ModelSpec spec;
    PartitionIndex partition;
    ParamVector w;
    std::vector<ClientId> universe;
    std::size_t t = 1;  // next round number

    SimState(const std::vector<ClientDataset>& clients, ModelSpec spec, PartitionIndex partition,
             ParamVector w0);

    const ClientDataset& client(ClientId id) const;

private:
    std::vector<std::size_t> index_by_id_;
};

struct RoundResult {
    std::size_t round = 0;
    std::size_t participants = 0;
    std::uint64_t uplink_bytes = 0;
    bool no_op = false;  // empty universe
};

// One communication round: sample, local-train, query gradients + attributes
// (when the strategy needs them), then the strategy's aggregate-and-step.
RoundResult run_round(SimState& state, IStrategy& strategy, const SimConfig& cfg);

}  // namespace fedsim
