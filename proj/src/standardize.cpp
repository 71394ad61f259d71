#include <algorithm>
#include <cmath>
#include <map>

#include "pathlens/dataset.hpp"
#include "pathlens/error.hpp"

namespace pathlens {

namespace {

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
    bool constant = true;
};

Moments moments(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows) {
    Moments m;
    if (rows.empty()) return m;
    const double first = v(static_cast<Eigen::Index>(rows.front()));
    double sum = 0.0;
    for (auto r : rows) {
        const double x = v(static_cast<Eigen::Index>(r));
        sum += x;
        if (x != first) m.constant = false;
    }
    m.mean = sum / static_cast<double>(rows.size());
    if (rows.size() < 2 || m.constant) return m;
    double ss = 0.0;
    for (auto r : rows) {
        const double d = v(static_cast<Eigen::Index>(r)) - m.mean;
        ss += d * d;
    }
    m.sd = std::sqrt(ss / static_cast<double>(rows.size() - 1));
    return m;
}

}  // namespace

std::optional<std::size_t> StandardizationParams::column_position(std::string_view name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns.begin());
}

GroupColumnStats StandardizationParams::stats_for(const std::string& group, std::size_t column) const {
    if (const auto it = groups.find(group); it != groups.end()) return it->second.at(column);
    const bool pooled_everywhere = std::all_of(groups.begin(), groups.end(),
                                               [&](const auto& g) { return g.second.at(column).pooled_fallback; });
    if (!pooled_everywhere) {
        throw DataError("unseen group '" + group + "' for group-scoped column '" + columns.at(column) + "'");
    }
    return {pooled.at(column).mean, pooled.at(column).sd, true};
}

StandardizedData standardize_within_group(const EncodedMatrix& m, const StandardizeOptions& options) {
    const auto n = static_cast<std::size_t>(m.rows());
    if (n < 2) throw DataError("standardization needs at least two rows");

    std::vector<std::size_t> all_rows(n);
    for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;

    StandardizationParams params;
    params.group_column = options.group_column;

    std::vector<std::string> dropped;
    std::vector<Moments> pooled;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const auto& name = m.column_names[static_cast<std::size_t>(j)];
        const Moments mo = moments(m.values.col(j), all_rows);
        if (mo.constant) {
            if (!options.auto_drop) throw DataError("column '" + name + "' has zero variance");
            dropped.push_back(name);
            continue;
        }
        params.columns.push_back(name);
        params.pooled.push_back({mo.mean, mo.sd});
        pooled.push_back(mo);
    }
    params.dropped_columns = dropped;

    EncodedMatrix kept = dropped.empty() ? m : m.without_columns(dropped);

    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[group_key(kept.row_meta[i], options.group_column)].push_back(i);

    StandardizedData out;
    out.matrix = kept;
    for (const auto& [group, rows] : members) {
        auto& stats = params.groups[group];
        stats.reserve(params.columns.size());
        for (std::size_t j = 0; j < params.columns.size(); ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            const Moments mo = moments(kept.values.col(col), rows);
            GroupColumnStats s = mo.constant ? GroupColumnStats{params.pooled[j].mean, params.pooled[j].sd, true}
                                             : GroupColumnStats{mo.mean, mo.sd, false};
            for (auto r : rows) {
                const auto row = static_cast<Eigen::Index>(r);
                out.matrix.values(row, col) = (kept.values(row, col) - s.mean) / s.sd;
            }
            stats.push_back(s);
        }
    }
    out.params = std::move(params);
    return out;
}

EncodedMatrix apply_standardization(const EncodedMatrix& m, const StandardizationParams& params) {
    if (params.empty()) throw DataError("standardization parameters are empty");
    for (const auto& name : m.column_names) {
        if (!params.column_position(name) &&
            std::find(params.dropped_columns.begin(), params.dropped_columns.end(), name) == params.dropped_columns.end()) {
            throw DataError("column mismatch: unexpected column '" + name + "'");
        }
    }

    EncodedMatrix out;
    out.row_meta = m.row_meta;
    out.encoding = m.encoding;
    std::vector<std::size_t> positions;  // param index per output column
    std::vector<Eigen::Index> sources;
    for (std::size_t j = 0; j < params.columns.size(); ++j) {
        if (const auto src = m.find_column(params.columns[j])) {
            positions.push_back(j);
            sources.push_back(static_cast<Eigen::Index>(*src));
            out.column_names.push_back(params.columns[j]);
        }
    }
    for (const auto& [indicator, cols] : m.indicator_columns) {
        auto& kept = out.indicator_columns[indicator];
        for (const auto& c : cols) {
            if (out.find_column(c)) kept.push_back(c);
        }
    }

    const auto n = m.rows();
    out.values.resize(n, static_cast<Eigen::Index>(positions.size()));
    std::map<std::string, std::vector<GroupColumnStats>> cache;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto group = group_key(m.row_meta[static_cast<std::size_t>(i)], params.group_column);
        auto it = cache.find(group);
        if (it == cache.end()) {
            std::vector<GroupColumnStats> stats;
            for (auto p : positions) stats.push_back(params.stats_for(group, p));
            it = cache.emplace(group, std::move(stats)).first;
        }
        for (std::size_t j = 0; j < positions.size(); ++j) {
            const auto& s = it->second[j];
            out.values(i, static_cast<Eigen::Index>(j)) = (m.values(i, sources[j]) - s.mean) / s.sd;
        }
    }
    return out;
}

}  // namespace pathlens
