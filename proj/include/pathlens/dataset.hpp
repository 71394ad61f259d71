#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pathlens/model_spec.hpp"

namespace pathlens {

inline constexpr std::array<std::string_view, 3> kIdentityColumns{"study", "participant", "object"};

/// Column normalized to [0, 1] by the data producer; values outside are rejected.
inline constexpr std::string_view kExposureColumn = "exposure_time_normalized";

/// String-valued CSV contents. `dropped` counts rows removed by listwise deletion.
struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::size_t dropped = 0;

    bool has_column(std::string_view name) const;
    /// Index of `name` in the header; throws DataError when absent.
    std::size_t column(std::string_view name) const;
    const std::string& value(std::size_t row, std::string_view name) const;
};

RawTable read_csv(std::istream& in);
RawTable read_csv_file(const std::filesystem::path& path);
void write_csv(std::ostream& out, const RawTable& table);

struct IngestOptions {
    /// predict/score inputs may omit the outcome column.
    bool require_outcome = true;
};

/// Reads a CSV and applies listwise deletion over the identity columns and
/// every indicator of `spec`: rows with an empty or unparseable value for a
/// numeric/boolean/outcome indicator are removed. Throws on a missing
/// required column or when no row survives.
RawTable ingest_csv(const std::filesystem::path& path, const ModelSpec& spec, const IngestOptions& options = {});
RawTable ingest_table(RawTable table, const ModelSpec& spec, const IngestOptions& options = {});

std::optional<double> parse_number(std::string_view text);
/// true/false (any case) or 1/0.
std::optional<bool> parse_boolean(std::string_view text);

struct RowMeta {
    std::string study;
    std::string participant;
    std::string object;

    bool operator==(const RowMeta&) const = default;
};

/// Group label of a row: "study", "participant", "object", or "" (one group).
std::string group_key(const RowMeta& meta, std::string_view group_column);

/// Categorical indicator -> levels, reference level first.
using Encoding = std::map<std::string, std::vector<std::string>>;

struct EncodedMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> column_names;
    std::vector<RowMeta> row_meta;
    /// Model indicator -> its encoded columns. An indicator whose columns were
    /// all dropped keeps an empty entry.
    std::map<std::string, std::vector<std::string>> indicator_columns;
    Encoding encoding;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    std::optional<std::size_t> find_column(std::string_view name) const;
    std::size_t column_index(std::string_view name) const;
    Eigen::VectorXd column(std::string_view name) const;

    EncodedMatrix select_rows(std::span<const std::size_t> rows) const;
    EncodedMatrix without_columns(std::span<const std::string> names) const;

    /// Matrix whose every column is its own indicator; rows default to a
    /// single study "all".
    static EncodedMatrix from_columns(std::vector<std::string> names, Eigen::MatrixXd values,
                                      std::vector<RowMeta> meta = {});
};

/// Dummy-codes categoricals against their reference level (L-1 columns named
/// <indicator><level>), maps booleans to 0/1 and passes numerics through.
/// With `fixed` the categorical levels are taken from a previous encoding;
/// otherwise from the spec, or discovered from the data (sorted).
EncodedMatrix encode_indicators(const RawTable& raw, const ModelSpec& spec, const Encoding* fixed = nullptr);

/// Stacks matrices with identical columns.
EncodedMatrix concat_rows(std::span<const EncodedMatrix> parts);

/// Columns whose sample variance over all rows is zero.
std::vector<std::string> zero_variance_columns(const EncodedMatrix& m);

// ---------------------------------------------------------------------------
// Standardization

struct ColumnStats {
    double mean = 0.0;
    double sd = 1.0;

    bool operator==(const ColumnStats&) const = default;
};

struct GroupColumnStats {
    double mean = 0.0;
    double sd = 1.0;
    /// Column is constant inside this group, so pooled stats were used.
    bool pooled_fallback = false;

    bool operator==(const GroupColumnStats&) const = default;
};

struct StandardizationParams {
    std::string group_column;
    std::vector<std::string> columns;
    std::vector<ColumnStats> pooled;
    std::map<std::string, std::vector<GroupColumnStats>> groups;
    /// Zero-variance columns removed by auto-drop.
    std::vector<std::string> dropped_columns;

    bool empty() const { return columns.empty(); }
    std::optional<std::size_t> column_position(std::string_view name) const;
    /// Stats used for (group, column); unseen groups fall back to pooled only
    /// when every training group already used the pooled stats for that column.
    GroupColumnStats stats_for(const std::string& group, std::size_t column) const;

    bool operator==(const StandardizationParams&) const = default;
};

struct StandardizeOptions {
    std::string group_column = "study";
    /// Remove zero-variance columns instead of failing.
    bool auto_drop = false;
};

struct StandardizedData {
    EncodedMatrix matrix;
    StandardizationParams params;
};

/// Within-group z-scores with sample (n-1) sd. A column constant inside a
/// group but varying pooled is standardized with its pooled stats for that
/// group. A column with zero pooled variance is an error unless auto-drop.
StandardizedData standardize_within_group(const EncodedMatrix& m, const StandardizeOptions& options = {});

/// Replays stored params; never re-estimates. Output columns follow params.columns.
EncodedMatrix apply_standardization(const EncodedMatrix& m, const StandardizationParams& params);

}  // namespace pathlens
