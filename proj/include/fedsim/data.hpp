#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/flsim.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct SyntheticConfig {
    std::size_t n_clients = 200;
    double samples_mu = 3.4;      // log-normal over per-client example counts
    double samples_sigma = 0.5;
    std::size_t n_items = 50;
    std::size_t n_context_values = 5;
    double label_shift_std = 0.0; // per-client bias offset inducing label skew
    std::size_t preference_dim = 4;
    std::uint64_t seed = 1;

    void validate() const;
};

// A client population plus the categorical field vocabulary it induces.
struct Federation {
    std::vector<ClientDataset> clients;
    std::vector<FieldSpec> fields;  // user, item, context columns

    std::size_t total_examples() const;
};

// Ground-truth logistic model over per-user/item/context latent factors with a
// per-client Normal(0, label_shift_std) bias offset. Bitwise reproducible per
// seed; per-client substreams are derived from (seed, client).
Federation generate_synthetic(const SyntheticConfig& cfg);

struct IngestError : std::runtime_error {
    std::size_t line;  // 1-based, 0 when not tied to a specific line
    IngestError(std::size_t line_no, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
    explicit IngestError(const std::string& msg) : std::runtime_error(msg), line(0) {}
};

// CSV with header; required columns user_id,item_id,label,timestamp, any other
// columns are categorical context features. Rows are grouped by user into one
// client each; categorical values are dictionary-encoded in order of first
// appearance.
Federation load_csv(const std::string& path);

// Inverse of load_csv for generated federations (gen-data output).
void write_csv(const Federation& fed, const std::string& path);

}  // namespace fedsim
