#include "fedsim/meta.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace fedsim {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

constexpr double kRhoClamp = 30.0;

}  // namespace

MetaParams MetaParams::init(std::size_t cells, std::size_t attr_dim) {
    MetaParams p;
    p.attr_dim = attr_dim;
    p.rho.assign(cells, 0.0);  // theta_s starts at 0.5, the steepest sigmoid point
    p.theta_alpha.assign(cells, std::vector<double>(attr_dim + 1, 0.0));  // uniform alpha
    return p;
}

double MetaParams::theta_s(std::size_t cell) const { return sigmoid(rho[cell]); }

AttrNormalizer AttrNormalizer::fit(std::span<const ClientAttributes> cohort) {
    AttrNormalizer n;
    if (cohort.empty()) return n;
    n.cells = cohort[0].cell_count();
    n.attrs = cohort[0].attr_count();
    n.mean.assign(n.cells * n.attrs, 0.0);
    n.std_dev.assign(n.cells * n.attrs, 0.0);
    const double inv_k = 1.0 / static_cast<double>(cohort.size());
    for (std::size_t c = 0; c < n.cells; ++c) {
        for (std::size_t a = 0; a < n.attrs; ++a) {
            double sum = 0.0;
            for (const ClientAttributes& z : cohort) sum += z.at(c, a);
            const double mu = sum * inv_k;
            double var = 0.0;
            for (const ClientAttributes& z : cohort) {
                const double d = z.at(c, a) - mu;
                var += d * d;
            }
            n.mean[c * n.attrs + a] = mu;
            n.std_dev[c * n.attrs + a] = std::max(kStdFloor, std::sqrt(var * inv_k));
        }
    }
    return n;
}

double AttrNormalizer::apply(const ClientAttributes& a, std::size_t cell, std::size_t attr) const {
    const std::size_t i = cell * attrs + attr;
    return (a.at(cell, attr) - mean[i]) / std_dev[i];
}

MetaForwardResult meta_forward(std::span<const ParamVector> deltas,
                               std::span<const ClientAttributes> attrs, const MetaParams& theta,
                               const PartitionIndex& partition, const MetaConfig& cfg) {
    if (deltas.empty()) throw std::invalid_argument("meta_forward: no client updates");
    const std::size_t k_clients = deltas.size();
    const std::size_t cells = partition.cell_count();
    const std::size_t dim = theta.attr_dim;

    const AttrNormalizer norm = AttrNormalizer::fit(attrs);

    MetaForwardResult res;
    res.cache.weighted = ParamVector(deltas[0].layout());
    res.cache.alpha.assign(cells, std::vector<double>(k_clients, 0.0));
    res.cache.zhat.assign(cells, std::vector<double>(k_clients * dim, 0.0));
    res.delta = ParamVector(deltas[0].layout());

    std::vector<double> scores(k_clients);
    for (std::size_t c = 0; c < cells; ++c) {
        std::vector<double>& alpha = res.cache.alpha[c];
        std::vector<double>& zhat = res.cache.zhat[c];
        if (cfg.learn_weighting) {
            const std::vector<double>& ta = theta.theta_alpha[c];
            for (std::size_t k = 0; k < k_clients; ++k) {
                double s = ta[dim];  // bias
                for (std::size_t a = 0; a < dim; ++a) {
                    const double z = norm.apply(attrs[k], c, a);
                    zhat[k * dim + a] = z;
                    s += ta[a] * z;
                }
                scores[k] = s;
            }
            const double s_max = *std::max_element(scores.begin(), scores.end());
            double total = 0.0;
            for (std::size_t k = 0; k < k_clients; ++k) {
                alpha[k] = std::exp(scores[k] - s_max);
                total += alpha[k];
            }
            for (double& a : alpha) a /= total;
        } else {
            std::fill(alpha.begin(), alpha.end(), 1.0 / static_cast<double>(k_clients));
            for (std::size_t k = 0; k < k_clients; ++k)
                for (std::size_t a = 0; a < dim; ++a)
                    zhat[k * dim + a] = norm.apply(attrs[k], c, a);
        }

        const double ts = cfg.learn_scaling ? theta.theta_s(c) : 1.0;
        double* weighted = res.cache.weighted.data();
        double* out = res.delta.data();
        for (const auto& [off, len] : partition.segments(c)) {
            for (std::size_t i = off; i < off + len; ++i) {
                double acc = 0.0;
                for (std::size_t k = 0; k < k_clients; ++k) acc += alpha[k] * deltas[k][i];
                weighted[i] = acc;
                out[i] = ts * acc;
            }
        }
    }
    return res;
}

MetaGrad meta_backward(const ParamVector& g_total, const RoundSnapshot& snapshot,
                       const MetaParams& theta_prev, const PartitionIndex& partition,
                       const MetaConfig& cfg) {
    if (snapshot.deltas.empty()) throw std::invalid_argument("meta_backward: empty snapshot");
    const std::size_t k_clients = snapshot.deltas.size();
    const std::size_t cells = partition.cell_count();
    const std::size_t dim = theta_prev.attr_dim;

    // Replay the previous round's aggregation at theta_prev.
    const MetaForwardResult fwd =
        meta_forward(snapshot.deltas, snapshot.attrs, theta_prev, partition, cfg);

    // u = g elementwise-times d(server_step)/d(delta), evaluated at the
    // post-update momenta. For sgd the factor is just gamma_s.
    const ServerOptConfig& oc = snapshot.opt_state_pre.cfg;
    ParamVector u = g_total;
    if (oc.kind == ServerOptKind::kSgd) {
        scale_in_place(u, oc.gamma_s);
    } else {
        const double* m_pre = snapshot.opt_state_pre.m.data();
        const double* M_pre = snapshot.opt_state_pre.M.data();
        const double* d = fwd.delta.data();
        double* uv = u.data();
        const double b2 = oc.kind == ServerOptKind::kAdam ? oc.beta2 : 1.0;
        const double dd_coef = oc.kind == ServerOptKind::kAdam ? (1.0 - oc.beta2) : 1.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double m_post = oc.beta1 * m_pre[i] + (1.0 - oc.beta1) * d[i];
            const double M_post = b2 * M_pre[i] + dd_coef * d[i] * d[i];
            const double root = std::sqrt(M_post);
            const double denom = root + oc.epsilon;
            const double curv = root > 0.0 ? m_post * dd_coef * d[i] / root : 0.0;
            uv[i] *= oc.gamma_s * ((1.0 - oc.beta1) * denom - curv) / (denom * denom);
        }
    }

    MetaGrad grad = MetaParams::init(cells, dim);
    std::vector<double> b(k_clients);
    for (std::size_t c = 0; c < cells; ++c) {
        const double ts = cfg.learn_scaling ? theta_prev.theta_s(c) : 1.0;

        if (cfg.learn_scaling) {
            // d delta[A] / d rho = theta_s(1-theta_s) * weighted[A]
            grad.rho[c] = ts * (1.0 - ts) * partition.cell_dot(c, u, fwd.cache.weighted);
        }
        if (cfg.learn_weighting) {
            const std::vector<double>& alpha = fwd.cache.alpha[c];
            const std::vector<double>& zhat = fwd.cache.zhat[c];
            double b_bar = 0.0;  // sum_k alpha_k b_k
            for (std::size_t k = 0; k < k_clients; ++k) {
                b[k] = ts * partition.cell_dot(c, u, snapshot.deltas[k]);
                b_bar += alpha[k] * b[k];
            }
            std::vector<double>& ga = grad.theta_alpha[c];
            for (std::size_t k = 0; k < k_clients; ++k) {
                const double ds = alpha[k] * (b[k] - b_bar);  // softmax Jacobian row
                for (std::size_t a = 0; a < dim; ++a) ga[a] += ds * zhat[k * dim + a];
                ga[dim] += ds;
            }
        }
    }
    return grad;
}

MetaGrad clip_meta_grad(MetaGrad grad, double rho_clip, double alpha_clip) {
    double rho_sq = 0.0;
    double alpha_sq = 0.0;
    for (std::size_t c = 0; c < grad.cell_count(); ++c) {
        rho_sq += grad.rho[c] * grad.rho[c];
        for (double v : grad.theta_alpha[c]) alpha_sq += v * v;
    }
    if (rho_clip > 0.0 && rho_sq > rho_clip * rho_clip) {
        const double s = rho_clip / std::sqrt(rho_sq);
        for (double& v : grad.rho) v *= s;
    }
    if (alpha_clip > 0.0 && alpha_sq > alpha_clip * alpha_clip) {
        const double s = alpha_clip / std::sqrt(alpha_sq);
        for (std::size_t c = 0; c < grad.cell_count(); ++c)
            for (double& v : grad.theta_alpha[c]) v *= s;
    }
    return grad;
}

MetaParams meta_step(const MetaParams& theta, const MetaGrad& grad, double gamma_meta) {
    if (theta.cell_count() != grad.cell_count() || theta.attr_dim != grad.attr_dim)
        throw std::invalid_argument("meta_step: shape mismatch");
    MetaParams next = theta;
    for (std::size_t c = 0; c < theta.cell_count(); ++c) {
        next.rho[c] = std::clamp(theta.rho[c] - gamma_meta * grad.rho[c], -kRhoClamp, kRhoClamp);
        for (std::size_t a = 0; a <= theta.attr_dim; ++a)
            next.theta_alpha[c][a] = theta.theta_alpha[c][a] - gamma_meta * grad.theta_alpha[c][a];
    }
    return next;
}

MetaRoundResult metaua_round(std::span<const ClientRoundOutput> outputs, const MetaParams& theta,
                             const std::optional<RoundSnapshot>& snapshot,
                             const ServerOptState& opt_state, const ParamVector& w,
                             const ParamVector& g_total, const PartitionIndex& partition,
                             const MetaConfig& cfg) {
    MetaRoundResult res;
    res.theta = theta;
    if (snapshot && !cfg.frozen_baseline()) {
        const MetaGrad raw = meta_backward(g_total, *snapshot, theta, partition, cfg);
        const MetaGrad grad = clip_meta_grad(raw, cfg.rho_clip, cfg.alpha_clip);
        if (std::getenv("FEDSIM_META_DEBUG")) {
            fprintf(stderr, "metagrad");
            for (std::size_t c = 0; c < raw.cell_count(); ++c)
                fprintf(stderr, " | %s rho=%.3e w0=%.3e", partition.cell_name(c).c_str(),
                        raw.rho[c], raw.attr_dim ? raw.theta_alpha[c][0] : 0.0);
            fprintf(stderr, "\n");
        }
        res.theta = meta_step(theta, grad, cfg.gamma_meta);
    }

    std::vector<ParamVector> deltas;
    std::vector<ClientAttributes> attrs;
    std::vector<ClientId> ids;
    deltas.reserve(outputs.size());
    attrs.reserve(outputs.size());
    ids.reserve(outputs.size());
    for (const ClientRoundOutput& o : outputs) {
        deltas.push_back(o.delta);
        attrs.push_back(o.attrs);
        ids.push_back(o.client_id);
    }

    MetaForwardResult fwd = meta_forward(deltas, attrs, res.theta, partition, cfg);
    res.snapshot = RoundSnapshot{std::move(ids), std::move(deltas), std::move(attrs), opt_state};
    auto [w_next, opt_next] = server_step(opt_state, w, fwd.delta);
    res.w = std::move(w_next);
    res.opt_state = std::move(opt_next);
    return res;
}

ParamVector MetaUAStrategy::round(const ParamVector& w, std::span<const ClientRoundOutput> outputs,
                                  const ParamVector& g_total) {
    MetaRoundResult res =
        metaua_round(outputs, theta_, snapshot_, opt_, w, g_total, *partition_, cfg_);
    theta_ = std::move(res.theta);
    opt_ = std::move(res.opt_state);
    snapshot_ = std::move(res.snapshot);
    return std::move(res.w);
}

void MetaUAStrategy::diagnostics(std::vector<std::pair<std::string, double>>& out) const {
    for (std::size_t c = 0; c < theta_.cell_count(); ++c) {
        const std::string cell = partition_->cell_name(c);
        out.emplace_back("theta_s." + cell, cfg_.learn_scaling ? theta_.theta_s(c) : 1.0);
        for (std::size_t a = 0; a <= theta_.attr_dim; ++a) {
            const std::string suffix = a == theta_.attr_dim ? "bias" : "w" + std::to_string(a);
            out.emplace_back("alpha." + cell + "." + suffix, theta_.theta_alpha[c][a]);
        }
    }
}

}  // namespace fedsim
