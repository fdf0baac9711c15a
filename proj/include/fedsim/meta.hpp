#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fedsim/aggregation.hpp"
#include "fedsim/flsim.hpp"
#include "fedsim/params.hpp"

namespace fedsim {

struct MetaConfig {
    double gamma_meta = 0.1;
    // Per-group L2 clips on the meta-gradient before the SGD step (0 disables).
    // The adagrad VJP factor grows like 1/(sqrt(M)+eps) on coordinates whose
    // accumulator is still near zero (fresh embedding rows), which spikes the
    // raw gradient by orders of magnitude and saturates the weighting softmax.
    // The scaling and weighting groups get separate budgets: their raw
    // magnitudes differ by orders of magnitude.
    double rho_clip = 0.15;
    double alpha_clip = 0.05;
    // Ablation switches. With scaling disabled theta_s is pinned to 1; with
    // weighting disabled alpha is pinned uniform. Both disabled is the
    // frozen-baseline mode: the strategy coincides with the uniform-average
    // baseline under the same server optimizer.
    bool learn_scaling = true;
    bool learn_weighting = true;

    bool frozen_baseline() const { return !learn_scaling && !learn_weighting; }
};

// Per partition-cell scaling logits (theta_s = sigmoid(rho)) and linear
// client-weighting parameters (attr weights + trailing bias).
struct MetaParams {
    std::size_t attr_dim = 0;
    std::vector<double> rho;                        // one per cell
    std::vector<std::vector<double>> theta_alpha;   // per cell, size attr_dim + 1

    static MetaParams init(std::size_t cells, std::size_t attr_dim);
    double theta_s(std::size_t cell) const;
    std::size_t cell_count() const { return rho.size(); }
};

using MetaGrad = MetaParams;  // same shape

// Per (cell, attribute) z-score statistics over one round's cohort.
struct AttrNormalizer {
    std::size_t cells = 0;
    std::size_t attrs = 0;
    std::vector<double> mean;  // cells x attrs, row-major
    std::vector<double> std_dev;

    static constexpr double kStdFloor = 1e-8;
    static AttrNormalizer fit(std::span<const ClientAttributes> cohort);
    double apply(const ClientAttributes& a, std::size_t cell, std::size_t attr) const;
};

struct MetaForwardCache {
    ParamVector weighted;                      // sum_k alpha_k * delta_k (before theta_s)
    std::vector<std::vector<double>> alpha;    // per cell: K softmax weights
    std::vector<std::vector<double>> zhat;     // per cell: K x attr_dim normalized attrs
};

struct MetaForwardResult {
    ParamVector delta;
    MetaForwardCache cache;
};

// Per cell A: scores s_k = theta_alpha[A] . [zhat_k; 1], alpha = softmax_k(s),
// delta[A] = theta_s[A] * sum_k alpha_k * delta_k[A].
MetaForwardResult meta_forward(std::span<const ParamVector> deltas,
                               std::span<const ClientAttributes> attrs, const MetaParams& theta,
                               const PartitionIndex& partition, const MetaConfig& cfg);

// Everything from round t-1 needed for the delayed meta-gradient at round t.
struct RoundSnapshot {
    std::vector<ClientId> client_ids;          // ascending
    std::vector<ParamVector> deltas;
    std::vector<ClientAttributes> attrs;       // raw, renormalized on replay
    ServerOptState opt_state_pre;              // state before round t-1's server step
};

// Gradient of g_total . w^t(theta) where w^t replays the snapshot's
// aggregate-and-step: a vector-Jacobian product through the server optimizer
// (at its post-update momenta) and the aggregation softmax/sigmoid.
MetaGrad meta_backward(const ParamVector& g_total, const RoundSnapshot& snapshot,
                       const MetaParams& theta_prev, const PartitionIndex& partition,
                       const MetaConfig& cfg);

// Plain gradient descent on (rho, theta_alpha). rho is kept in [-30, 30] so
// sigmoid(rho) stays strictly inside (0, 1) in float64.
MetaParams meta_step(const MetaParams& theta, const MetaGrad& grad, double gamma_meta);

// Scales each parameter group down to its L2 budget when it exceeds it.
MetaGrad clip_meta_grad(MetaGrad grad, double rho_clip, double alpha_clip);

struct MetaRoundResult {
    ParamVector w;
    MetaParams theta;
    ServerOptState opt_state;
    RoundSnapshot snapshot;
};

// One full MetaUA round: delayed meta update (when a snapshot exists), then
// forward aggregation with the updated theta and a server step.
MetaRoundResult metaua_round(std::span<const ClientRoundOutput> outputs, const MetaParams& theta,
                             const std::optional<RoundSnapshot>& snapshot,
                             const ServerOptState& opt_state, const ParamVector& w,
                             const ParamVector& g_total, const PartitionIndex& partition,
                             const MetaConfig& cfg);

class MetaUAStrategy final : public IStrategy {
public:
    MetaUAStrategy(MetaParams theta, ServerOptState opt_state, const PartitionIndex* partition,
                   MetaConfig cfg)
        : theta_(std::move(theta)), opt_(std::move(opt_state)), partition_(partition), cfg_(cfg) {}

    std::string_view name() const override { return "metaua"; }
    StrategyNeeds needs() const override { return {true, true}; }
    int uplink_vectors_per_client() const override { return 2; }  // delta plus query gradient
    ParamVector round(const ParamVector& w, std::span<const ClientRoundOutput> outputs,
                      const ParamVector& g_total) override;
    void diagnostics(std::vector<std::pair<std::string, double>>& out) const override;

    const MetaParams& theta() const { return theta_; }
    const std::optional<RoundSnapshot>& snapshot() const { return snapshot_; }

private:
    MetaParams theta_;
    ServerOptState opt_;
    const PartitionIndex* partition_;
    MetaConfig cfg_;
    std::optional<RoundSnapshot> snapshot_;
};

}  // namespace fedsim
