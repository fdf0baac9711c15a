#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fedsim/data.hpp"

using namespace fedsim;

namespace {

double positive_rate(const ClientDataset& c) {
    std::size_t pos = 0, n = 0;
    for (const std::vector<Example>* part : {&c.support, &c.query, &c.validation}) {
        for (const Example& x : *part) {
            pos += x.label;
            ++n;
        }
    }
    return n ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;
}

double rate_spread(const Federation& fed) {
    std::vector<double> rates;
    for (const ClientDataset& c : fed.clients) rates.push_back(positive_rate(c));
    double mean = 0.0;
    for (double r : rates) mean += r;
    mean /= static_cast<double>(rates.size());
    double var = 0.0;
    for (double r : rates) var += (r - mean) * (r - mean);
    return std::sqrt(var / static_cast<double>(rates.size()));
}

bool same_federation(const Federation& a, const Federation& b) {
    if (a.clients.size() != b.clients.size()) return false;
    const auto same_rows = [](const std::vector<Example>& x, const std::vector<Example>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i].feature_ids != y[i].feature_ids || x[i].label != y[i].label ||
                x[i].timestamp != y[i].timestamp)
                return false;
        return true;
    };
    for (std::size_t i = 0; i < a.clients.size(); ++i) {
        if (!same_rows(a.clients[i].support, b.clients[i].support)) return false;
        if (!same_rows(a.clients[i].query, b.clients[i].query)) return false;
        if (!same_rows(a.clients[i].validation, b.clients[i].validation)) return false;
    }
    return true;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& text) {
        path = std::string("fedsim_test_") + std::to_string(reinterpret_cast<std::uintptr_t>(this)) +
               ".csv";
        std::ofstream out(path);
        out << text;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("synthetic generation is reproducible per seed") {
    SyntheticConfig cfg;
    cfg.n_clients = 30;
    cfg.seed = 99;
    const Federation a = generate_synthetic(cfg);
    const Federation b = generate_synthetic(cfg);
    CHECK(same_federation(a, b));
    cfg.seed = 100;
    CHECK_FALSE(same_federation(a, generate_synthetic(cfg)));
}

TEST_CASE("zero label shift with equal sizes gives a homogeneous federation") {
    SyntheticConfig cfg;
    cfg.n_clients = 100;
    cfg.samples_mu = 5.0;  // ~148 examples each
    cfg.samples_sigma = 0.0;
    cfg.label_shift_std = 0.0;
    cfg.seed = 3;
    const Federation fed = generate_synthetic(cfg);
    const std::size_t size0 = fed.clients[0].n_samples() + fed.clients[0].validation.size();
    for (const ClientDataset& c : fed.clients)
        CHECK(c.n_samples() + c.validation.size() == size0);

    // exchangeable clients: two halves agree on the mean positive rate
    std::vector<double> rates;
    for (const ClientDataset& c : fed.clients) rates.push_back(positive_rate(c));
    const std::size_t half = rates.size() / 2;
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) m1 += rates[i];
    for (std::size_t i = half; i < rates.size(); ++i) m2 += rates[i];
    m1 /= static_cast<double>(half);
    m2 /= static_cast<double>(rates.size() - half);
    const double spread = rate_spread(fed);
    const double sigma_diff = spread * std::sqrt(2.0 / static_cast<double>(half));
    CHECK(std::abs(m1 - m2) <= 3.0 * sigma_diff);
}

TEST_CASE("positive-rate spread grows with label_shift_std") {
    std::vector<double> spreads;
    for (double shift : {0.0, 0.5, 1.0, 2.0}) {
        SyntheticConfig cfg;
        cfg.n_clients = 80;
        cfg.samples_mu = 5.0;
        cfg.samples_sigma = 0.2;
        cfg.label_shift_std = shift;
        cfg.seed = 11;
        spreads.push_back(rate_spread(generate_synthetic(cfg)));
    }
    for (std::size_t i = 1; i < spreads.size(); ++i) CHECK(spreads[i] > spreads[i - 1]);
}

TEST_CASE("synthetic split invariants hold") {
    SyntheticConfig cfg;
    cfg.n_clients = 40;
    cfg.samples_sigma = 0.9;
    cfg.label_shift_std = 1.0;
    cfg.seed = 5;
    const Federation fed = generate_synthetic(cfg);
    REQUIRE(fed.fields.size() == 3);
    for (const ClientDataset& c : fed.clients) {
        for (const Example& v : c.validation) {
            for (const Example& s : c.support) CHECK(v.timestamp >= s.timestamp);
            for (const Example& q : c.query) CHECK(v.timestamp >= q.timestamp);
        }
        for (const std::vector<Example>* part : {&c.support, &c.query, &c.validation})
            for (const Example& x : *part) {
                REQUIRE(x.feature_ids.size() == 3);
                CHECK(x.feature_ids[0] == c.client_id);
                CHECK(x.feature_ids[1] < cfg.n_items);
                CHECK(x.feature_ids[2] < cfg.n_context_values);
            }
    }
}

TEST_CASE("csv loading splits 10 rows per user into 9 train + 1 validation") {
    const TempFile file(
        "user_id,item_id,label,timestamp\n"
        "u1,a,1,0\nu1,b,0,1\nu1,c,1,2\nu1,a,0,3\nu1,b,1,4\n"
        "u1,c,0,5\nu1,a,1,6\nu1,b,0,7\nu1,c,1,8\nu1,a,0,9\n"
        "u2,a,0,0\nu2,b,1,1\nu2,c,0,2\nu2,a,1,3\nu2,b,0,4\n"
        "u2,c,1,5\nu2,a,0,6\nu2,b,1,7\nu2,c,0,8\nu2,a,1,9\n");
    const Federation fed = load_csv(file.path);
    REQUIRE(fed.clients.size() == 2);
    for (const ClientDataset& c : fed.clients) {
        CHECK(c.support.size() + c.query.size() == 9);
        CHECK(c.validation.size() == 1);
        CHECK(c.validation[0].timestamp == 9);
    }
    REQUIRE(fed.fields.size() == 2);
    CHECK(fed.fields[0].name == "user_id");
    CHECK(fed.fields[0].cardinality == 2);
    CHECK(fed.fields[1].cardinality == 3);
}

TEST_CASE("label outside {0,1} reports the offending line") {
    const TempFile file(
        "user_id,item_id,label,timestamp\n"
        "u1,a,1,0\n"
        "u1,b,2,1\n");
    try {
        load_csv(file.path);
        FAIL("expected IngestError");
    } catch (const IngestError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("missing required column and malformed rows are structured errors") {
    const TempFile no_label("user_id,item_id,timestamp\nu1,a,0\n");
    CHECK_THROWS_AS(load_csv(no_label.path), IngestError);

    const TempFile short_row(
        "user_id,item_id,label,timestamp\n"
        "u1,a,1,0\n"
        "u1,a,1\n");
    try {
        load_csv(short_row.path);
        FAIL("expected IngestError");
    } catch (const IngestError& e) {
        CHECK(e.line == 3);
    }

    const TempFile bad_ts(
        "user_id,item_id,label,timestamp\n"
        "u1,a,1,zero\n");
    CHECK_THROWS_AS(load_csv(bad_ts.path), IngestError);
}

TEST_CASE("extra columns become context features with dense stable ids") {
    const TempFile file(
        "user_id,item_id,genre,label,timestamp,device\n"
        "u1,a,drama,1,0,phone\n"
        "u1,b,comedy,0,1,tv\n"
        "u1,a,drama,1,2,phone\n"
        "u2,b,comedy,1,0,tv\n");
    const Federation fed = load_csv(file.path);
    REQUIRE(fed.fields.size() == 4);  // user, item, genre, device
    CHECK(fed.fields[2].name == "genre");
    CHECK(fed.fields[3].name == "device");
    CHECK(fed.fields[2].cardinality == 2);
    // ids are dense: max id + 1 == cardinality per field
    std::vector<std::uint32_t> max_id(fed.fields.size(), 0);
    for (const ClientDataset& c : fed.clients)
        for (const std::vector<Example>* part : {&c.support, &c.query, &c.validation})
            for (const Example& x : *part)
                for (std::size_t f = 0; f < x.feature_ids.size(); ++f)
                    max_id[f] = std::max(max_id[f], x.feature_ids[f]);
    for (std::size_t f = 0; f < fed.fields.size(); ++f)
        CHECK(max_id[f] + 1 == fed.fields[f].cardinality);

    const Federation again = load_csv(file.path);
    CHECK(same_federation(fed, again));
}

TEST_CASE("timestamp ties keep file order") {
    const TempFile file(
        "user_id,item_id,label,timestamp\n"
        "u1,a,1,5\n"
        "u1,b,0,5\n"
        "u1,c,1,5\n");
    const Federation fed = load_csv(file.path);
    const ClientDataset& c = fed.clients[0];
    REQUIRE(c.support.size() == 3);  // 3 rows: no validation, no query
    CHECK(c.support[0].feature_ids[1] == 0);
    CHECK(c.support[1].feature_ids[1] == 1);
    CHECK(c.support[2].feature_ids[1] == 2);
}

TEST_CASE("write_csv round-trips a generated federation") {
    SyntheticConfig cfg;
    cfg.n_clients = 12;
    cfg.label_shift_std = 0.7;
    cfg.seed = 21;
    const Federation fed = generate_synthetic(cfg);
    const TempFile file("");
    write_csv(fed, file.path);
    const Federation loaded = load_csv(file.path);
    REQUIRE(loaded.clients.size() == fed.clients.size());
    CHECK(loaded.total_examples() == fed.total_examples());
    for (std::size_t i = 0; i < fed.clients.size(); ++i) {
        CHECK(loaded.clients[i].support.size() == fed.clients[i].support.size());
        CHECK(loaded.clients[i].validation.size() == fed.clients[i].validation.size());
    }
}
