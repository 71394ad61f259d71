#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

namespace pathlens {

inline constexpr double kDefaultThreshold = 0.5;

/// One scored row. `value` is the model's probability-determining quantity
/// before clamping (destandardized PLS prediction, MLP output, RF vote share).
struct Prediction {
    std::size_t row = 0;
    double value = 0.0;
    double probability = 0.0;
    int label = 0;
    std::optional<int> truth;
    int fold = -1;
};

struct PredictionSet {
    std::vector<Prediction> rows;

    std::size_t size() const { return rows.size(); }
};

/// Shared label rule for every model: recalled iff value >= threshold.
inline int threshold_label(double value, double threshold = kDefaultThreshold) {
    return value >= threshold ? 1 : 0;
}

inline double clamp_probability(double value) { return std::clamp(value, 0.0, 1.0); }

}  // namespace pathlens
