#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pathlens/dataset.hpp"
#include "pathlens/model_spec.hpp"
#include "pathlens/prediction.hpp"

namespace pathlens {

struct PlsOptions {
    /// Convergence when the largest absolute outer-weight change drops below this.
    double tolerance = 1e-7;
    int max_iterations = 300;
    /// Throw NumericalError instead of returning an unconverged fit.
    bool require_convergence = true;
};

struct TrainOptions {
    StandardizeOptions standardize;
    PlsOptions pls;
};

struct ConstructFit {
    std::string name;
    MeasurementMode mode = MeasurementMode::formative;
    std::vector<std::string> columns;
    Eigen::VectorXd weights;
    Eigen::VectorXd loadings;
    /// Subtracted from X_j w_j so training scores have mean zero; nonzero only
    /// when pooled fallbacks leave a standardized column off-center.
    double score_offset = 0.0;
};

struct PathFit {
    std::string source;
    std::string target;
    double coefficient = 0.0;
};

struct PooledFallback {
    std::string group;
    std::string column;
};

struct PlsDiagnostics {
    std::vector<std::string> dropped_columns;
    std::vector<std::string> pruned_constructs;
    std::vector<PooledFallback> pooled_fallbacks;
    std::vector<std::string> warnings;
};

/// Converged PLS path model. Constructs are stored in topological order.
struct FittedPls {
    std::vector<ConstructFit> constructs;
    std::vector<PathFit> paths;
    std::size_t outcome = 0;
    Eigen::MatrixXd construct_scores;  // training rows x constructs
    std::map<std::string, double> r_squared;
    StandardizationParams standardization;
    /// Raw outcome (mean, sd) per standardization group.
    std::map<std::string, ColumnStats> outcome_destandardization;
    int iterations = 0;
    bool converged = false;
    double max_weight_delta = 0.0;
    PlsDiagnostics diagnostics;

    /// Model document and categorical levels, so raw CSVs can be re-encoded.
    std::string model_document;
    Encoding encoding;
    std::map<std::string, std::vector<std::string>> indicator_columns;

    const ConstructFit& construct(std::string_view name) const;
    const ConstructFit& outcome_construct() const { return constructs.at(outcome); }
    double path_coefficient(std::string_view source, std::string_view target) const;
    /// Outer weight of an encoded column, searched over all constructs.
    double weight(std::string_view column) const;
    double loading(std::string_view column) const;
};

/// Core estimator on an already standardized matrix. The result carries no
/// standardization params, so predict_pls() needs train_pls() instead.
FittedPls fit_pls(const EncodedMatrix& standardized, const ValidatedModel& model, const PlsOptions& options = {});

/// Standardizes within group, prunes auto-dropped columns from the model,
/// fits, and records everything needed to score new raw rows.
FittedPls train_pls(const EncodedMatrix& raw, const ValidatedModel& model, const TrainOptions& options = {});

/// Scores raw encoded rows with the trained weights and paths. The outcome
/// prediction is destandardized with the row's group outcome stats and
/// clamped to [0, 1].
PredictionSet predict_pls(const FittedPls& fit, const EncodedMatrix& raw, double threshold = kDefaultThreshold);

// ---------------------------------------------------------------------------
// Bootstrap

struct PathInterval {
    PathSpec path;
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::size_t replicates = 0;
};

struct BootstrapOptions {
    std::size_t replicates = 500;
    std::uint64_t seed = 42;
    /// Resample attempts per replicate before the fit error is propagated.
    std::size_t max_attempts = 20;
    double level = 0.95;
    TrainOptions train;
};

struct BootstrapResult {
    std::vector<PathInterval> intervals;
    std::size_t retries = 0;
};

/// Percentile intervals for every path from row resamples; each replicate is
/// sign-aligned to the full-sample weights before aggregation.
BootstrapResult bootstrap_paths(const EncodedMatrix& raw, const ValidatedModel& model, const BootstrapOptions& options);

/// Type-7 sample quantile of unsorted values.
double sample_quantile(std::vector<double> values, double q);

// ---------------------------------------------------------------------------
// Sensitivity

struct LeverEffect {
    std::string construct;
    std::string column;
    double weight = 0.0;
    double path_coefficient = 0.0;
    double effect = 0.0;
};

struct LeverReport {
    double value = 0.0;
    double probability = 0.0;
    int label = 0;
    double delta = 0.0;
    std::string group;
    std::vector<LeverEffect> effects;  // sorted by |effect|, descending
};

/// Change in the unclamped predicted recall probability of `base_row` when
/// one indicator rises by `delta` standardized units. `only` restricts the
/// report to the named indicators or encoded columns.
LeverReport sensitivity_levers(const FittedPls& fit, const EncodedMatrix& base_row, double delta,
                               std::span<const std::string> only = {});

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const StandardizationParams& p);
void from_json(const nlohmann::json& j, StandardizationParams& p);
void to_json(nlohmann::json& j, const FittedPls& f);
void from_json(const nlohmann::json& j, FittedPls& f);
void to_json(nlohmann::json& j, const PathInterval& p);
void to_json(nlohmann::json& j, const LeverReport& r);

}  // namespace pathlens
