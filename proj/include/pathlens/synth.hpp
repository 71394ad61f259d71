#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pathlens/dataset.hpp"
#include "pathlens/model_spec.hpp"

namespace pathlens {

struct SynthStudy {
    std::string label;
    std::size_t n = 0;
    double base_rate = 0.5;
    /// Rows are grouped into participants of this many consecutive objects.
    std::size_t objects_per_participant = 1;
    /// Indicator -> value held fixed for every row of the study.
    std::map<std::string, std::string> constants;
};

struct SynthPath {
    std::string source;
    std::string target;
    double value = 0.0;
};

struct SynthConfig {
    /// Empty means the built-in recall model.
    std::string model_document;
    std::vector<SynthStudy> studies;
    std::vector<SynthPath> true_paths;
    /// Encoded column -> generating weight; missing columns get 0.
    std::map<std::string, double> formative_weights;
    /// Categorical indicator -> level probabilities (uniform when absent).
    std::map<std::string, std::map<std::string, double>> level_probabilities;
    /// Boolean indicator -> P(true) (0.5 when absent).
    std::map<std::string, double> boolean_rates;
    /// Numeric indicator -> "normal" (default) or "uniform" on [0, 1].
    std::map<std::string, std::string> distributions;
    double noise_sd = 1.0;
    /// Replace noise_sd by the per-study noise that makes standardized
    /// regression on the binary outcome recover true_paths.
    bool calibrate_noise = false;
    std::uint64_t seed = 42;
};

/// Weights and paths shaped like the reported pooled fit, studies sized
/// 432/144/144/432 (scaled by `scale`).
SynthConfig four_study_config(double scale = 1.0);

/// Rows per study with identity columns and one column per indicator. Each
/// composite is the weighted sum of within-study standardized encoded
/// indicators, oriented so its indicator correlations sum to >= 0 and scaled
/// to unit sd. The latent outcome is the path-weighted sum of the outcome's
/// predecessor composites plus noise, binarized per study at the quantile
/// giving the study's base rate.
RawTable generate_synthetic(const SynthConfig& cfg);

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct OracleResult {
    std::vector<std::string> predictors;  // outcome predecessor constructs
    std::vector<double> coefficients;
    std::string method;
};

/// Least squares of the standardized outcome on its standardized single-indicator
/// predecessors, solved from the normal equations by Gauss-Jordan elimination.
/// Standardization is pooled over all rows.
OracleResult small_case_oracle(const EncodedMatrix& m, const ValidatedModel& model);

}  // namespace pathlens
