#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace fedsim {

// Rank-based (Mann-Whitney) AUC with average-rank tie handling.
// nullopt when the labels are single-class.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Mean binary cross-entropy with the training-side 1e-12 clamp.
double logloss(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace fedsim
