#include "pathlens/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "pathlens/error.hpp"

namespace pathlens {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

/// One RFC 4180 record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool quoted = false;
    bool any = false;
    char c = 0;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(trim(field));
            return true;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (!any) return false;
    fields.push_back(trim(field));
    return true;
}

bool needs_quotes(const std::string& s) {
    return s.find_first_of(",\"\n\r") != std::string::npos;
}

bool valid_for_kind(const std::string& value, IndicatorKind kind) {
    if (value.empty()) return false;
    switch (kind) {
        case IndicatorKind::numeric: return parse_number(value).has_value();
        case IndicatorKind::boolean: return parse_boolean(value).has_value();
        case IndicatorKind::binary_outcome: {
            const auto v = parse_number(value);
            return v && (*v == 0.0 || *v == 1.0);
        }
        case IndicatorKind::categorical: return true;
    }
    return false;
}

}  // namespace

bool RawTable::has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

std::size_t RawTable::column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing required column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
}

const std::string& RawTable::value(std::size_t row, std::string_view name) const {
    return rows.at(row).at(column(name));
}

RawTable read_csv(std::istream& in) {
    RawTable table;
    std::vector<std::string> fields;
    if (!read_record(in, fields) || (fields.size() == 1 && fields[0].empty())) {
        throw DataError("CSV has no header row");
    }
    if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
    table.header = fields;
    std::set<std::string> seen;
    for (const auto& h : table.header) {
        if (!seen.insert(h).second) throw DataError("duplicate CSV column '" + h + "'");
    }
    std::size_t line = 1;
    while (read_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != table.header.size()) {
            throw DataError("CSV line " + std::to_string(line) + ": expected " + std::to_string(table.header.size()) +
                            " fields, found " + std::to_string(fields.size()));
        }
        table.rows.push_back(fields);
    }
    return table;
}

RawTable read_csv_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    try {
        return read_csv(in);
    } catch (const Error& e) {
        rethrow_with_context(e, path.string() + ": ");
    }
}

void write_csv(std::ostream& out, const RawTable& table) {
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            if (needs_quotes(row[i])) {
                out << '"';
                for (char c : row[i]) {
                    if (c == '"') out << '"';
                    out << c;
                }
                out << '"';
            } else {
                out << row[i];
            }
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

std::optional<double> parse_number(std::string_view text) {
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::optional<bool> parse_boolean(std::string_view text) {
    const auto v = lower(text);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    return std::nullopt;
}

RawTable ingest_table(RawTable table, const ModelSpec& spec, const IngestOptions& options) {
    struct Required {
        std::size_t index;
        IndicatorKind kind;
    };
    if (options.require_outcome) {
        for (const auto& c : spec.constructs) {
            for (const auto& ind : c.indicators) {
                if (ind.kind == IndicatorKind::binary_outcome && !table.has_column(ind.name)) {
                    throw DataError("missing outcome column '" + ind.name + "'");
                }
            }
        }
    }
    std::vector<Required> required;
    for (auto id : kIdentityColumns) required.push_back({table.column(id), IndicatorKind::categorical});
    for (const auto& c : spec.constructs) {
        for (const auto& ind : c.indicators) {
            if (ind.kind == IndicatorKind::binary_outcome && !options.require_outcome && !table.has_column(ind.name)) {
                continue;
            }
            required.push_back({table.column(ind.name), ind.kind});
        }
    }

    const std::size_t before = table.rows.size();
    std::erase_if(table.rows, [&](const std::vector<std::string>& row) {
        return std::any_of(required.begin(), required.end(),
                           [&](const Required& r) { return !valid_for_kind(row[r.index], r.kind); });
    });
    table.dropped += before - table.rows.size();
    if (table.rows.empty()) throw DataError("no complete rows remain after listwise deletion");
    return table;
}

RawTable ingest_csv(const std::filesystem::path& path, const ModelSpec& spec, const IngestOptions& options) {
    try {
        return ingest_table(read_csv_file(path), spec, options);
    } catch (const Error& e) {
        if (std::string(e.what()).rfind(path.string(), 0) == 0) throw;
        rethrow_with_context(e, path.string() + ": ");
    }
}

std::string group_key(const RowMeta& meta, std::string_view group_column) {
    if (group_column == "study") return meta.study;
    if (group_column == "participant") return meta.study + "/" + meta.participant;
    if (group_column == "object") return meta.study + "/" + meta.object;
    if (group_column.empty() || group_column == "none") return "all";
    throw DataError("unknown group column '" + std::string(group_column) + "'");
}

std::optional<std::size_t> EncodedMatrix::find_column(std::string_view name) const {
    const auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - column_names.begin());
}

std::size_t EncodedMatrix::column_index(std::string_view name) const {
    const auto idx = find_column(name);
    if (!idx) throw DataError("column '" + std::string(name) + "' not present");
    return *idx;
}

Eigen::VectorXd EncodedMatrix::column(std::string_view name) const {
    return values.col(static_cast<Eigen::Index>(column_index(name)));
}

EncodedMatrix EncodedMatrix::select_rows(std::span<const std::size_t> rows) const {
    EncodedMatrix out;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
    out.row_meta.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
        out.row_meta.push_back(row_meta.at(rows[i]));
    }
    out.column_names = column_names;
    out.indicator_columns = indicator_columns;
    out.encoding = encoding;
    return out;
}

EncodedMatrix EncodedMatrix::without_columns(std::span<const std::string> names) const {
    std::vector<Eigen::Index> keep;
    EncodedMatrix out;
    for (std::size_t j = 0; j < column_names.size(); ++j) {
        if (std::find(names.begin(), names.end(), column_names[j]) == names.end()) {
            keep.push_back(static_cast<Eigen::Index>(j));
            out.column_names.push_back(column_names[j]);
        }
    }
    out.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) out.values.col(static_cast<Eigen::Index>(j)) = values.col(keep[j]);
    out.row_meta = row_meta;
    out.encoding = encoding;
    for (const auto& [indicator, cols] : indicator_columns) {
        auto& kept = out.indicator_columns[indicator];
        for (const auto& c : cols) {
            if (std::find(names.begin(), names.end(), c) == names.end()) kept.push_back(c);
        }
    }
    return out;
}

EncodedMatrix EncodedMatrix::from_columns(std::vector<std::string> names, Eigen::MatrixXd values,
                                          std::vector<RowMeta> meta) {
    if (static_cast<Eigen::Index>(names.size()) != values.cols()) throw DataError("column name count mismatch");
    EncodedMatrix out;
    if (meta.empty()) meta.assign(static_cast<std::size_t>(values.rows()), RowMeta{"all", "", ""});
    if (static_cast<Eigen::Index>(meta.size()) != values.rows()) throw DataError("row metadata count mismatch");
    for (const auto& n : names) out.indicator_columns[n] = {n};
    out.column_names = std::move(names);
    out.values = std::move(values);
    out.row_meta = std::move(meta);
    return out;
}

EncodedMatrix encode_indicators(const RawTable& raw, const ModelSpec& spec, const Encoding* fixed) {
    EncodedMatrix out;
    const std::size_t n = raw.rows.size();

    struct Source {
        std::size_t raw_index;
        const IndicatorSpec* indicator;
        std::string level;  // categorical dummy level
    };
    std::vector<Source> sources;

    for (const auto& c : spec.constructs) {
        for (const auto& ind : c.indicators) {
            if (!raw.has_column(ind.name)) {
                if (ind.kind == IndicatorKind::binary_outcome) continue;  // scoring input without labels
                throw DataError("missing required column '" + ind.name + "'");
            }
            const std::size_t idx = raw.column(ind.name);
            auto& columns = out.indicator_columns[ind.name];
            if (ind.kind != IndicatorKind::categorical) {
                sources.push_back({idx, &ind, {}});
                columns.push_back(ind.name);
                continue;
            }
            std::vector<std::string> levels;
            if (fixed && fixed->count(ind.name)) {
                levels = fixed->at(ind.name);
            } else {
                const std::string& ref = *ind.reference_level;
                std::vector<std::string> others;
                if (!ind.levels.empty()) {
                    for (const auto& l : ind.levels) {
                        if (l != ref) others.push_back(l);
                    }
                } else {
                    std::set<std::string> found;
                    for (const auto& row : raw.rows) found.insert(row[idx]);
                    found.erase(ref);
                    others.assign(found.begin(), found.end());
                }
                levels.push_back(ref);
                levels.insert(levels.end(), others.begin(), others.end());
            }
            for (const auto& row : raw.rows) {
                if (std::find(levels.begin(), levels.end(), row[idx]) == levels.end()) {
                    throw DataError("unknown level '" + row[idx] + "' for categorical '" + ind.name + "'");
                }
            }
            out.encoding[ind.name] = levels;
            for (std::size_t l = 1; l < levels.size(); ++l) {
                sources.push_back({idx, &ind, levels[l]});
                columns.push_back(dummy_column_name(ind.name, levels[l]));
            }
        }
    }

    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sources.size()));
    for (std::size_t j = 0; j < sources.size(); ++j) {
        const auto& s = sources[j];
        out.column_names.push_back(s.indicator->kind == IndicatorKind::categorical
                                       ? dummy_column_name(s.indicator->name, s.level)
                                       : s.indicator->name);
        for (std::size_t i = 0; i < n; ++i) {
            const std::string& cell = raw.rows[i][s.raw_index];
            double v = 0.0;
            switch (s.indicator->kind) {
                case IndicatorKind::categorical: v = cell == s.level ? 1.0 : 0.0; break;
                case IndicatorKind::boolean: {
                    const auto b = parse_boolean(cell);
                    if (!b) throw DataError("non-boolean value '" + cell + "' in column '" + s.indicator->name + "'");
                    v = *b ? 1.0 : 0.0;
                    break;
                }
                case IndicatorKind::binary_outcome:
                case IndicatorKind::numeric: {
                    const auto x = parse_number(cell);
                    if (!x) throw DataError("non-numeric value '" + cell + "' in column '" + s.indicator->name + "'");
                    if (s.indicator->kind == IndicatorKind::binary_outcome && *x != 0.0 && *x != 1.0) {
                        throw DataError("outcome column '" + s.indicator->name + "' must be 0 or 1, found '" + cell + "'");
                    }
                    if (s.indicator->name == kExposureColumn && (*x < 0.0 || *x > 1.0)) {
                        throw DataError("column '" + s.indicator->name + "' must lie in [0,1], found '" + cell + "'");
                    }
                    v = *x;
                    break;
                }
            }
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }

    out.row_meta.reserve(n);
    const auto study = raw.column("study"), participant = raw.column("participant"), object = raw.column("object");
    for (const auto& row : raw.rows) out.row_meta.push_back({row[study], row[participant], row[object]});
    return out;
}

EncodedMatrix concat_rows(std::span<const EncodedMatrix> parts) {
    if (parts.empty()) throw DataError("nothing to concatenate");
    EncodedMatrix out;
    out.column_names = parts.front().column_names;
    out.indicator_columns = parts.front().indicator_columns;
    out.encoding = parts.front().encoding;
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.column_names != out.column_names) throw DataError("datasets have different encoded columns");
        rows += p.rows();
    }
    out.values.resize(rows, static_cast<Eigen::Index>(out.column_names.size()));
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.values.middleRows(at, p.rows()) = p.values;
        at += p.rows();
        out.row_meta.insert(out.row_meta.end(), p.row_meta.begin(), p.row_meta.end());
    }
    return out;
}

std::vector<std::string> zero_variance_columns(const EncodedMatrix& m) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (m.rows() == 0 || m.values.col(j).maxCoeff() == m.values.col(j).minCoeff()) {
            out.push_back(m.column_names[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

}  // namespace pathlens
