#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/params.hpp"

namespace fedsim {

struct FieldSpec {
    std::string name;
    std::size_t cardinality = 0;
};

// Embeddings + optional single cross interaction + relu MLP + sigmoid head.
struct ModelSpec {
    std::vector<FieldSpec> fields;
    std::size_t embed_dim = 4;
    int cross_layers = 0;  // 0 or 1
    std::vector<std::size_t> hidden;

    std::size_t input_dim() const { return fields.size() * embed_dim; }
    void validate() const;  // throws std::invalid_argument
};

struct Example {
    std::vector<std::uint32_t> feature_ids;  // one per field, 0-based
    std::uint8_t label = 0;                  // 0 or 1
    std::int64_t timestamp = 0;
};

// Blocks: emb.<field> per field, [cross.w, cross.b], h<i>.w / h<i>.b per hidden
// layer, out.w / out.b.
LayoutPtr build_layout(const ModelSpec& spec);

// 2-D tensors uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] with fan_in the
// second dimension (embedding tables: embed_dim); biases zero.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

double forward(const ParamVector& w, const Example& x, const ModelSpec& spec);

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};

// Mean binary cross-entropy over the batch and its exact gradient.
// p is clamped to [1e-12, 1-1e-12] inside the logs only.
LossGrad loss_and_grad(const ParamVector& w, std::span<const Example> batch, const ModelSpec& spec);

std::vector<double> predict_batch(const ParamVector& w, std::span<const Example> examples,
                                  const ModelSpec& spec);

constexpr double kProbClamp = 1e-12;

}  // namespace fedsim
