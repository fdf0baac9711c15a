#include "fedsim/model.hpp"

#include <cmath>
#include <stdexcept>

#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Activations for one example, reused across a batch.
struct Scratch {
    std::vector<double> e0;                // concatenated embeddings
    std::vector<double> u;                 // cross pre-activation W*e0 + b
    std::vector<double> x;                 // MLP input (e0 or crossed)
    std::vector<std::vector<double>> pre;  // per hidden layer, pre-relu
    std::vector<std::vector<double>> act;  // per hidden layer, post-relu
    std::vector<double> dx;                // gradient buffers
    std::vector<double> dh;

    explicit Scratch(const ModelSpec& spec) {
        const std::size_t d = spec.input_dim();
        e0.resize(d);
        u.resize(spec.cross_layers ? d : 0);
        x.resize(d);
        pre.resize(spec.hidden.size());
        act.resize(spec.hidden.size());
        for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
            pre[l].resize(spec.hidden[l]);
            act[l].resize(spec.hidden[l]);
        }
        std::size_t widest = d;
        for (std::size_t wdt : spec.hidden) widest = std::max(widest, wdt);
        dx.resize(widest);
        dh.resize(widest);
    }
};

double forward_example(const ParamVector& w, const Example& x, const ModelSpec& spec, Scratch& s) {
    const std::size_t d = spec.input_dim();
    const std::size_t e = spec.embed_dim;
    for (std::size_t f = 0; f < spec.fields.size(); ++f) {
        const std::span<const double> table = w.block_at(f);
        const std::size_t row = static_cast<std::size_t>(x.feature_ids[f]) * e;
        for (std::size_t j = 0; j < e; ++j) s.e0[f * e + j] = table[row + j];
    }

    std::size_t bi = spec.fields.size();  // next block index
    if (spec.cross_layers) {
        const std::span<const double> cw = w.block_at(bi++);
        const std::span<const double> cb = w.block_at(bi++);
        for (std::size_t i = 0; i < d; ++i) {
            double acc = cb[i];
            const double* row = cw.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) acc += row[j] * s.e0[j];
            s.u[i] = acc;
            s.x[i] = s.e0[i] * acc + s.e0[i];
        }
    } else {
        for (std::size_t i = 0; i < d; ++i) s.x[i] = s.e0[i];
    }

    const double* in = s.x.data();
    std::size_t in_dim = d;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
        const std::span<const double> lw = w.block_at(bi++);
        const std::span<const double> lb = w.block_at(bi++);
        const std::size_t out_dim = spec.hidden[l];
        for (std::size_t i = 0; i < out_dim; ++i) {
            double acc = lb[i];
            const double* row = lw.data() + i * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * in[j];
            s.pre[l][i] = acc;
            s.act[l][i] = acc > 0.0 ? acc : 0.0;
        }
        in = s.act[l].data();
        in_dim = out_dim;
    }

    const std::span<const double> ow = w.block_at(bi++);
    const std::span<const double> ob = w.block_at(bi);
    double z = ob[0];
    for (std::size_t j = 0; j < in_dim; ++j) z += ow[j] * in[j];
    return sigmoid(z);
}

// Accumulates the raw (unscaled) gradient of this example's loss into grad,
// given dz = dloss/dlogit. Relies on the activations left in s by
// forward_example.
void backward_example(const ParamVector& w, const Example& x, const ModelSpec& spec, Scratch& s,
                      double dz, ParamVector& grad) {
    const std::size_t d = spec.input_dim();
    const std::size_t e = spec.embed_dim;
    const std::size_t n_hidden = spec.hidden.size();
    const std::size_t out_w_index = grad.layout()->block_count() - 2;

    const double* last_act = n_hidden ? s.act[n_hidden - 1].data() : s.x.data();
    const std::size_t last_dim = n_hidden ? spec.hidden[n_hidden - 1] : d;

    {
        const std::span<double> gow = grad.block_at(out_w_index);
        const std::span<double> gob = grad.block_at(out_w_index + 1);
        const std::span<const double> ow = w.block_at(out_w_index);
        for (std::size_t j = 0; j < last_dim; ++j) {
            gow[j] += dz * last_act[j];
            s.dh[j] = dz * ow[j];
        }
        gob[0] += dz;
    }

    // hidden layers in reverse; s.dh holds the gradient wrt the post-relu
    // activations of layer l, s.dx receives the one for layer l-1
    for (std::size_t l = n_hidden; l-- > 0;) {
        const std::size_t bi = spec.fields.size() + (spec.cross_layers ? 2 : 0) + 2 * l;
        const std::span<const double> lw = w.block_at(bi);
        const std::span<double> glw = grad.block_at(bi);
        const std::span<double> glb = grad.block_at(bi + 1);
        const std::size_t out_dim = spec.hidden[l];
        const double* in = l > 0 ? s.act[l - 1].data() : s.x.data();
        const std::size_t in_dim = l > 0 ? spec.hidden[l - 1] : d;

        for (std::size_t j = 0; j < in_dim; ++j) s.dx[j] = 0.0;
        for (std::size_t i = 0; i < out_dim; ++i) {
            const double dpre = s.pre[l][i] > 0.0 ? s.dh[i] : 0.0;
            if (dpre == 0.0) continue;
            double* grow = glw.data() + i * in_dim;
            const double* row = lw.data() + i * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) {
                grow[j] += dpre * in[j];
                s.dx[j] += dpre * row[j];
            }
            glb[i] += dpre;
        }
        std::swap(s.dh, s.dx);
    }
    // s.dh now holds dloss/dx (the MLP input)

    if (spec.cross_layers) {
        const std::size_t bi = spec.fields.size();
        const std::span<const double> cw = w.block_at(bi);
        const std::span<double> gcw = grad.block_at(bi);
        const std::span<double> gcb = grad.block_at(bi + 1);
        // x_i = e0_i * u_i + e0_i with u = W e0 + b
        for (std::size_t j = 0; j < d; ++j) s.dx[j] = s.dh[j] * (s.u[j] + 1.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double t = s.dh[i] * s.e0[i];
            if (t == 0.0) {
                continue;
            }
            gcb[i] += t;
            double* grow = gcw.data() + i * d;
            const double* row = cw.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) {
                grow[j] += t * s.e0[j];
                s.dx[j] += t * row[j];
            }
        }
        std::swap(s.dh, s.dx);
    }
    // s.dh now holds dloss/de0

    for (std::size_t f = 0; f < spec.fields.size(); ++f) {
        const std::span<double> gtable = grad.block_at(f);
        const std::size_t row = static_cast<std::size_t>(x.feature_ids[f]) * e;
        for (std::size_t j = 0; j < e; ++j) gtable[row + j] += s.dh[f * e + j];
    }
}

}  // namespace

void ModelSpec::validate() const {
    if (fields.empty()) throw std::invalid_argument("model needs at least one field");
    for (const FieldSpec& f : fields)
        if (f.cardinality < 1) throw std::invalid_argument("field cardinality must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
    if (cross_layers != 0 && cross_layers != 1)
        throw std::invalid_argument("cross_layers must be 0 or 1");
    for (std::size_t h : hidden)
        if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
}

LayoutPtr build_layout(const ModelSpec& spec) {
    spec.validate();
    LayoutBuilder b;
    for (const FieldSpec& f : spec.fields) b.add("emb." + f.name, {f.cardinality, spec.embed_dim});
    const std::size_t d = spec.input_dim();
    if (spec.cross_layers) {
        b.add("cross.w", {d, d});
        b.add("cross.b", {d});
    }
    std::size_t in_dim = d;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
        b.add("h" + std::to_string(l) + ".w", {spec.hidden[l], in_dim});
        b.add("h" + std::to_string(l) + ".b", {spec.hidden[l]});
        in_dim = spec.hidden[l];
    }
    b.add("out.w", {1, in_dim});
    b.add("out.b", {1});
    return b.build();
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector w(build_layout(spec));
    Rng rng(derive_seed(seed, 0x1217));
    for (std::size_t i = 0; i < w.layout()->block_count(); ++i) {
        const Block& blk = w.layout()->blocks()[i];
        if (blk.shape.size() != 2) continue;  // biases stay zero
        const double bound = 1.0 / std::sqrt(static_cast<double>(blk.shape[1]));
        for (double& v : w.block_at(i)) v = rng.uniform(-bound, bound);
    }
    return w;
}

double forward(const ParamVector& w, const Example& x, const ModelSpec& spec) {
    Scratch s(spec);
    return forward_example(w, x, spec, s);
}

LossGrad loss_and_grad(const ParamVector& w, std::span<const Example> batch,
                       const ModelSpec& spec) {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    Scratch s(spec);
    LossGrad out;
    out.grad = ParamVector(w.layout());
    double loss_sum = 0.0;
    for (const Example& x : batch) {
        const double p = forward_example(w, x, spec, s);
        const double y = x.label ? 1.0 : 0.0;
        const double pc = std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
        loss_sum += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
        // exact gradient of the clamped loss: zero where the clamp is active
        const bool inside = p > kProbClamp && p < 1.0 - kProbClamp;
        if (inside) backward_example(w, x, spec, s, p - y, out.grad);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss = loss_sum * inv;
    scale_in_place(out.grad, inv);
    return out;
}

std::vector<double> predict_batch(const ParamVector& w, std::span<const Example> examples,
                                  const ModelSpec& spec) {
    Scratch s(spec);
    std::vector<double> out;
    out.reserve(examples.size());
    for (const Example& x : examples) out.push_back(forward_example(w, x, spec, s));
    return out;
}

}  // namespace fedsim
