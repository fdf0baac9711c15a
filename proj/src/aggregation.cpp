#include "fedsim/aggregation.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim {

ServerOptState ServerOptState::init(const ServerOptConfig& cfg, const LayoutPtr& layout) {
    ServerOptState s;
    s.cfg = cfg;
    s.m = ParamVector(layout);
    s.M = ParamVector(layout);
    return s;
}

ParamVector fedavg_aggregate(std::span<const ClientRoundOutput> outputs) {
    if (outputs.empty()) throw std::invalid_argument("fedavg_aggregate: no outputs");
    double n_total = 0.0;
    for (const ClientRoundOutput& o : outputs) n_total += static_cast<double>(o.n_samples);
    if (n_total == 0.0) throw std::invalid_argument("fedavg_aggregate: sum n_k is zero");
    ParamVector acc(outputs[0].delta.layout());
    for (const ClientRoundOutput& o : outputs)
        axpy_in_place(acc, static_cast<double>(o.n_samples) / n_total, o.delta);
    return acc;
}

ParamVector fednova_aggregate(std::span<const ClientRoundOutput> outputs) {
    if (outputs.empty()) throw std::invalid_argument("fednova_aggregate: no outputs");
    double n_total = 0.0;
    for (const ClientRoundOutput& o : outputs) {
        if (o.local_steps == 0) throw std::invalid_argument("fednova_aggregate: tau_k is zero");
        n_total += static_cast<double>(o.n_samples);
    }
    if (n_total == 0.0) throw std::invalid_argument("fednova_aggregate: sum n_k is zero");
    double tau_eff = 0.0;  // sum tau_k * n_k / n
    ParamVector acc(outputs[0].delta.layout());
    for (const ClientRoundOutput& o : outputs) {
        const double weight = static_cast<double>(o.n_samples) / n_total;
        tau_eff += static_cast<double>(o.local_steps) * weight;
        axpy_in_place(acc, weight / static_cast<double>(o.local_steps), o.delta);
    }
    scale_in_place(acc, tau_eff);
    return acc;
}

std::pair<ParamVector, ServerOptState> server_step(const ServerOptState& state,
                                                   const ParamVector& w,
                                                   const ParamVector& delta) {
    require_congruent(w, delta);
    ServerOptState next = state;
    next.step_count = state.step_count + 1;
    ParamVector w_next = w;

    const ServerOptConfig& c = state.cfg;
    switch (c.kind) {
        case ServerOptKind::kSgd:
            axpy_in_place(w_next, c.gamma_s, delta);
            return {std::move(w_next), std::move(next)};
        case ServerOptKind::kAdagrad:
        case ServerOptKind::kAdam: {
            double* m = next.m.data();
            double* M = next.M.data();
            const double* d = delta.data();
            double* out = w_next.data();
            for (std::size_t i = 0; i < delta.size(); ++i) {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * d[i];
                M[i] = c.kind == ServerOptKind::kAdagrad
                           ? M[i] + d[i] * d[i]
                           : c.beta2 * M[i] + (1.0 - c.beta2) * d[i] * d[i];
                out[i] += c.gamma_s * m[i] / (std::sqrt(M[i]) + c.epsilon);
            }
            return {std::move(w_next), std::move(next)};
        }
    }
    throw std::logic_error("unreachable server optimizer kind");
}

ParamVector BaselineStrategy::round(const ParamVector& w,
                                    std::span<const ClientRoundOutput> outputs,
                                    const ParamVector& /*g_total*/) {
    const ParamVector delta = agg_ == AggregatorKind::kFedAvg ? fedavg_aggregate(outputs)
                                                              : fednova_aggregate(outputs);
    auto [w_next, opt_next] = server_step(opt_, w, delta);
    opt_ = std::move(opt_next);
    return std::move(w_next);
}

}  // namespace fedsim
