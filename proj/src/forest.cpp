#include "pathlens/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pathlens/error.hpp"
#include "pathlens/parallel.hpp"
#include "pathlens/random.hpp"

namespace pathlens {

namespace {

using Eigen::Index;

// Gini decrease is maximized by maximizing sum_c l_c^2/nl + sum_c r_c^2/nr.
// Scores are kept as exact fractions so ties are real ties.
struct SplitScore {
    __int128 num = -1;
    __int128 den = 1;

    bool better_than(const SplitScore& o) const { return num * o.den > o.num * den; }
};

SplitScore score(std::size_t l0, std::size_t l1, std::size_t r0, std::size_t r1) {
    const auto nl = static_cast<__int128>(l0 + l1);
    const auto nr = static_cast<__int128>(r0 + r1);
    const __int128 ls = static_cast<__int128>(l0) * l0 + static_cast<__int128>(l1) * l1;
    const __int128 rs = static_cast<__int128>(r0) * r0 + static_cast<__int128>(r1) * r1;
    return {ls * nr + rs * nl, nl * nr};
}

struct Candidate {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    SplitScore score;
};

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, std::span<const int> labels, std::size_t mtry, std::size_t min_node,
                std::uint64_t seed)
        : x_(x), labels_(labels), mtry_(mtry), min_node_(std::max<std::size_t>(1, min_node)), rng_(seed) {}

    DecisionTree build(std::vector<std::size_t> rows) {
        grow(rows);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t>& rows) {
        const int id = static_cast<int>(tree_.nodes.size());
        TreeNode node;
        for (auto r : rows) ++node.counts[static_cast<std::size_t>(labels_[r])];
        tree_.nodes.push_back(node);
        if (node.counts[0] == 0 || node.counts[1] == 0 || rows.size() < 2 * min_node_) return id;

        const Candidate best = find_split(rows, node.counts);
        if (!best.found) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows) {
            (x_(static_cast<Index>(r), best.feature) <= best.threshold ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(left);
        const int rgt = grow(right);
        auto& n = tree_.nodes[static_cast<std::size_t>(id)];
        n.feature = best.feature;
        n.threshold = best.threshold;
        n.left = l;
        n.right = rgt;
        return id;
    }

    Candidate find_split(const std::vector<std::size_t>& rows, const std::array<std::size_t, 2>& total) {
        // Draw features without replacement. If every drawn feature is constant
        // on this node, keep drawing from the rest before giving up.
        const auto p = static_cast<std::size_t>(x_.cols());
        std::vector<std::size_t> pool(p);
        std::iota(pool.begin(), pool.end(), 0);
        std::size_t drawn = 0;
        std::size_t want = mtry_;
        Candidate best;
        while (!best.found && drawn < p) {
            const std::size_t batch_end = std::min(p, drawn + want);
            want = 1;
            for (std::size_t i = drawn; i < batch_end; ++i) std::swap(pool[i], pool[i + rng_.index(p - i)]);
            std::vector<std::size_t> batch(pool.begin() + static_cast<long>(drawn), pool.begin() + static_cast<long>(batch_end));
            std::sort(batch.begin(), batch.end());
            drawn = batch_end;
            for (auto f : batch) consider(rows, total, static_cast<int>(f), best);
        }
        return best;
    }

    void consider(const std::vector<std::size_t>& rows, const std::array<std::size_t, 2>& total, int feature,
                  Candidate& best) {
        std::vector<std::pair<double, int>> v;
        v.reserve(rows.size());
        for (auto r : rows) v.emplace_back(x_(static_cast<Index>(r), feature), labels_[r]);
        std::sort(v.begin(), v.end());
        std::array<std::size_t, 2> left{};
        for (std::size_t i = 0; i + 1 < v.size(); ++i) {
            ++left[static_cast<std::size_t>(v[i].second)];
            if (v[i].first == v[i + 1].first) continue;
            const std::size_t nl = i + 1;
            if (nl < min_node_ || v.size() - nl < min_node_) continue;
            const SplitScore s = score(left[0], left[1], total[0] - left[0], total[1] - left[1]);
            // Strictly better only: earlier features and smaller thresholds win ties.
            if (best.found && !s.better_than(best.score)) continue;
            double mid = v[i].first + (v[i + 1].first - v[i].first) / 2.0;
            if (!(mid < v[i + 1].first)) mid = v[i].first;
            best = {true, feature, mid, s};
        }
    }

    const Eigen::MatrixXd& x_;
    std::span<const int> labels_;
    std::size_t mtry_;
    std::size_t min_node_;
    Rng rng_;
    DecisionTree tree_;
};

}  // namespace

std::size_t default_features_per_split(std::size_t p) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
}

int DecisionTree::predict(std::span<const double> row) const {
    std::size_t at = 0;
    while (!nodes[at].is_leaf()) {
        const auto& n = nodes[at];
        at = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[at].counts[1] >= nodes[at].counts[0] ? 1 : 0;
}

Eigen::MatrixXd feature_block(const EncodedMatrix& m, const std::vector<std::string>& columns) {
    if (static_cast<std::size_t>(m.cols()) != columns.size()) {
        throw DataError("column mismatch: model expects " + std::to_string(columns.size()) + " features, got " +
                        std::to_string(m.cols()));
    }
    Eigen::MatrixXd out(m.rows(), static_cast<Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const auto src = m.find_column(columns[j]);
        if (!src) throw DataError("column mismatch: missing feature '" + columns[j] + "'");
        out.col(static_cast<Index>(j)) = m.values.col(static_cast<Index>(*src));
    }
    return out;
}

DecisionTree grow_tree(const Eigen::MatrixXd& x, std::span<const int> labels, std::span<const std::size_t> rows,
                       std::size_t features_per_split, std::size_t min_node_size, std::uint64_t stream_seed) {
    TreeBuilder builder(x, labels, features_per_split, min_node_size, stream_seed);
    return builder.build({rows.begin(), rows.end()});
}

ForestModel fit_forest(const EncodedMatrix& m, std::span<const int> labels, const ForestConfig& cfg) {
    const auto n = static_cast<std::size_t>(m.rows());
    const auto p = static_cast<std::size_t>(m.cols());
    if (n == 0 || p == 0) throw DataError("forest needs at least one row and one feature");
    if (labels.size() != n) throw DataError("forest labels do not match row count");
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("forest labels must be 0 or 1");
    }
    if (cfg.tree_count < 1) throw DataError("tree_count must be at least 1");

    ForestModel f;
    f.columns = m.column_names;
    f.features_per_split = cfg.features_per_split.value_or(default_features_per_split(p));
    if (f.features_per_split < 1 || f.features_per_split > p) {
        throw DataError("features_per_split must lie in [1, " + std::to_string(p) + "]");
    }
    f.trees.resize(cfg.tree_count);
    parallel_for(cfg.tree_count, [&](std::size_t t) {
        // The bootstrap draw and the feature draws share one stream per tree.
        Rng rng = Rng::substream(cfg.seed, t);
        std::vector<std::size_t> rows(n);
        if (cfg.bootstrap) {
            for (auto& r : rows) r = static_cast<std::size_t>(rng.index(n));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        f.trees[t] = grow_tree(m.values, labels, rows, f.features_per_split, cfg.min_node_size, rng.next());
    });
    return f;
}

PredictionSet predict_forest(const ForestModel& f, const EncodedMatrix& m, double threshold) {
    if (f.trees.empty()) throw DataError("forest has no trees");
    const Eigen::MatrixXd x = feature_block(m, f.columns);
    PredictionSet out;
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
        std::size_t votes = 0;
        for (const auto& t : f.trees) votes += static_cast<std::size_t>(t.predict(row));
        Prediction p;
        p.row = static_cast<std::size_t>(i);
        p.value = static_cast<double>(votes) / static_cast<double>(f.trees.size());
        p.probability = p.value;
        p.label = threshold_label(p.value, threshold);
        out.rows.push_back(p);
    }
    return out;
}

void to_json(nlohmann::json& j, const ForestModel& f) {
    auto trees = nlohmann::json::array();
    for (const auto& t : f.trees) {
        auto nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"counts", n.counts}});
            } else {
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"counts", n.counts}});
            }
        }
        trees.push_back(std::move(nodes));
    }
    j = {{"columns", f.columns}, {"features_per_split", f.features_per_split}, {"trees", trees}};
}

void from_json(const nlohmann::json& j, ForestModel& f) {
    f = {};
    j.at("columns").get_to(f.columns);
    j.at("features_per_split").get_to(f.features_per_split);
    for (const auto& t : j.at("trees")) {
        DecisionTree tree;
        for (const auto& n : t) {
            TreeNode node;
            n.at("counts").get_to(node.counts);
            if (n.contains("feature")) {
                n.at("feature").get_to(node.feature);
                n.at("threshold").get_to(node.threshold);
                n.at("left").get_to(node.left);
                n.at("right").get_to(node.right);
            }
            tree.nodes.push_back(node);
        }
        f.trees.push_back(std::move(tree));
    }
}

}  // namespace pathlens
