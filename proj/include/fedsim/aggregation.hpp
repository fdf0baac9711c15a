#pragma once

#include <span>
#include <utility>

#include "fedsim/flsim.hpp"
#include "fedsim/params.hpp"

namespace fedsim {

enum class ServerOptKind { kSgd, kAdagrad, kAdam };

struct ServerOptConfig {
    ServerOptKind kind = ServerOptKind::kSgd;
    double gamma_s = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
};

// First/second-order momenta of the server optimizer.
struct ServerOptState {
    ServerOptConfig cfg;
    ParamVector m;
    ParamVector M;  // elementwise >= 0
    std::size_t step_count = 0;

    static ServerOptState init(const ServerOptConfig& cfg, const LayoutPtr& layout);
};

// (1/sum n_k) * sum n_k * delta_k
ParamVector fedavg_aggregate(std::span<const ClientRoundOutput> outputs);

// (sum tau_k n_k / n) * sum (n_k / n) (1 / tau_k) delta_k
ParamVector fednova_aggregate(std::span<const ClientRoundOutput> outputs);

// One server optimization step; pure, returns the new weights and state.
// sgd:      w + gamma_s * delta
// adagrad:  m <- b1*m + (1-b1)*delta, M <- M + delta^2,          w + gamma_s*m/(sqrt(M)+eps)
// adam:     m <- b1*m + (1-b1)*delta, M <- b2*M + (1-b2)*delta^2, same step rule
std::pair<ParamVector, ServerOptState> server_step(const ServerOptState& state,
                                                   const ParamVector& w,
                                                   const ParamVector& delta);

enum class AggregatorKind { kFedAvg, kFedNova };

// FedAvg / FedNova / FedAdagrad / FedAdam: a baseline aggregate followed by a
// server step. Ignores query gradients and attributes.
class BaselineStrategy final : public IStrategy {
public:
    BaselineStrategy(std::string name, AggregatorKind agg, ServerOptState opt_state)
        : name_(std::move(name)), agg_(agg), opt_(std::move(opt_state)) {}

    std::string_view name() const override { return name_; }
    StrategyNeeds needs() const override { return {false, false}; }
    int uplink_vectors_per_client() const override { return 1; }
    ParamVector round(const ParamVector& w, std::span<const ClientRoundOutput> outputs,
                      const ParamVector& g_total) override;

    const ServerOptState& opt_state() const { return opt_; }

private:
    std::string name_;
    AggregatorKind agg_;
    ServerOptState opt_;
};

}  // namespace fedsim
