#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pathlens/dataset.hpp"
#include "pathlens/prediction.hpp"

namespace pathlens {

struct ForestConfig {
    std::size_t tree_count = 500;
    /// Unset means max(1, floor(sqrt(p))).
    std::optional<std::size_t> features_per_split;
    bool bootstrap = true;
    std::size_t min_node_size = 1;
    std::uint64_t seed = 42;
};

std::size_t default_features_per_split(std::size_t p);

/// Split nodes send x[feature] <= threshold left. Leaves have feature == -1.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<std::size_t, 2> counts{};  // training labels 0/1 reaching the node

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    /// Majority class of the reached leaf; ties go to 1.
    int predict(std::span<const double> row) const;
    bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
    std::vector<std::string> columns;
    std::size_t features_per_split = 1;
    std::vector<DecisionTree> trees;

    bool operator==(const ForestModel&) const = default;
};

/// Builds one tree on the given row multiset. Exposed for the permutation tests.
DecisionTree grow_tree(const Eigen::MatrixXd& x, std::span<const int> labels, std::span<const std::size_t> rows,
                       std::size_t features_per_split, std::size_t min_node_size, std::uint64_t stream_seed);

ForestModel fit_forest(const EncodedMatrix& m, std::span<const int> labels, const ForestConfig& cfg = {});

/// probability = share of trees voting 1.
PredictionSet predict_forest(const ForestModel& f, const EncodedMatrix& m, double threshold = kDefaultThreshold);

void to_json(nlohmann::json& j, const ForestModel& f);
void from_json(const nlohmann::json& j, ForestModel& f);

/// Selects `columns` from `m` in order; DataError on a missing or extra column.
Eigen::MatrixXd feature_block(const EncodedMatrix& m, const std::vector<std::string>& columns);

}  // namespace pathlens
