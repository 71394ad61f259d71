#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pathlens/dataset.hpp"
#include "pathlens/forest.hpp"
#include "pathlens/mlp.hpp"
#include "pathlens/model_spec.hpp"
#include "pathlens/pls.hpp"
#include "pathlens/prediction.hpp"

namespace pathlens {

struct FoldAssignment {
    std::size_t n = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> assignment;  // fold index per row

    std::vector<std::size_t> test_rows(std::size_t fold) const;
    std::vector<std::size_t> train_rows(std::size_t fold) const;
    std::vector<std::size_t> fold_sizes() const;

    bool operator==(const FoldAssignment&) const = default;
};

/// Shuffles row indices with Rng(seed) and deals them round-robin into k
/// folds. With `strata` the deal runs over each stratum in turn so classes
/// spread evenly; fold sizes still differ by at most one.
FoldAssignment make_folds(std::size_t n, std::size_t k, std::uint64_t seed, std::span<const int> strata = {});

enum class ModelKind { pls, forest, mlp };

inline constexpr std::array<ModelKind, 3> kAllModels{ModelKind::pls, ModelKind::forest, ModelKind::mlp};

/// Table label: SEM, RF or MLP.
std::string_view model_label(ModelKind kind);

struct ModelRunner {
    ModelKind kind = ModelKind::pls;
    const ValidatedModel* model = nullptr;
    TrainOptions pls;
    ForestConfig forest;
    MlpConfig mlp;
    double threshold = kDefaultThreshold;
};

/// Encoded columns of every non-outcome indicator, in matrix order.
std::vector<std::string> feature_columns(const EncodedMatrix& m, const ValidatedModel& model);
/// Outcome column as 0/1 labels.
std::vector<int> outcome_labels(const EncodedMatrix& m, const ValidatedModel& model);

/// Out-of-fold predictions for every row, in row order, each tagged with its fold.
PredictionSet cross_validate(const EncodedMatrix& data, const ModelRunner& runner, const FoldAssignment& folds);

struct MetricsReport {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    std::size_t n() const { return tp + fp + fn + tn; }
};

/// Zero denominators give 0.
MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);
MetricsReport classification_metrics(const PredictionSet& p);

struct LabeledDataset {
    std::string label;
    EncodedMatrix data;
};

struct BenchmarkConfig {
    TrainOptions pls;
    ForestConfig forest;
    MlpConfig mlp;
    std::size_t k = 10;
    std::uint64_t seed = 42;
    double threshold = kDefaultThreshold;
    bool stratified = false;
    /// Called before each model runs; receives the fold object it will use.
    std::function<void(const std::string& dataset, ModelKind, const FoldAssignment&)> fold_observer;

    BenchmarkConfig() { pls.standardize.auto_drop = true; }
};

struct BenchmarkCell {
    ModelKind model = ModelKind::pls;
    MetricsReport metrics;
};

struct BenchmarkRow {
    std::string dataset;
    std::size_t n = 0;
    std::vector<BenchmarkCell> cells;  // SEM, RF, MLP
    ModelKind best = ModelKind::pls;   // highest F1, earlier column on ties
};

struct BenchmarkTable {
    std::vector<BenchmarkRow> rows;  // datasets in input order, then Combined
    std::vector<std::string> warnings;
    std::size_t k = 0;
    std::uint64_t seed = 0;
};

/// Runs SEM, RF and MLP on identical folds for each dataset and for their
/// pooled concatenation ("Combined"). With one dataset the Combined row
/// reuses it unchanged.
BenchmarkTable benchmark_suite(std::span<const LabeledDataset> datasets, const ValidatedModel& model,
                               const BenchmarkConfig& cfg = {});

/// Aligned plain-text rendering: Dataset | N | SEM Acc F1 | RF Acc F1 | MLP Acc F1.
std::string format_benchmark_table(const BenchmarkTable& table);

struct GroupRecall {
    std::string study;
    std::string id;
    std::size_t recalled = 0;
    std::size_t total = 0;

    double fraction() const { return static_cast<double>(recalled) / static_cast<double>(total); }
    /// e.g. "1.00 (9/9)"
    std::string display() const;
};

struct StudyRange {
    std::string study;
    double participant_min = 0, participant_max = 0, participant_range = 0;
    double object_min = 0, object_max = 0, object_range = 0;
};

struct RangeReport {
    std::vector<GroupRecall> participants;
    std::vector<GroupRecall> objects;
    std::vector<StudyRange> studies;
};

/// Per-participant and per-object recall fractions and per-study spread.
RangeReport recall_aggregates(const RawTable& data, std::string_view outcome_column = "recall");

void to_json(nlohmann::json& j, const MetricsReport& m);
void to_json(nlohmann::json& j, const BenchmarkTable& t);
void to_json(nlohmann::json& j, const RangeReport& r);
void to_json(nlohmann::json& j, const FoldAssignment& f);

}  // namespace pathlens
