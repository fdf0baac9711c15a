#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim {

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
    std::size_t positives = 0;
    for (std::uint8_t y : labels) positives += y;
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average 1-based rank within tie groups; sums stay exact multiples of 0.5
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    return (rank_sum_pos - p * (p + 1.0) * 0.5) / (p * n);
}

double logloss(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw std::invalid_argument("logloss: empty or mismatched input");
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double pc = std::min(std::max(scores[i], kProbClamp), 1.0 - kProbClamp);
        sum += labels[i] ? -std::log(pc) : -std::log(1.0 - pc);
    }
    return sum / static_cast<double>(scores.size());
}

}  // namespace fedsim
