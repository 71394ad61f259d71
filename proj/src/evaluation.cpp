#include "pathlens/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "pathlens/error.hpp"
#include "pathlens/random.hpp"

namespace pathlens {

std::vector<std::size_t> FoldAssignment::test_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == fold) rows.push_back(i);
    }
    return rows;
}

std::vector<std::size_t> FoldAssignment::train_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] != fold) rows.push_back(i);
    }
    return rows;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto f : assignment) ++sizes[f];
    return sizes;
}

FoldAssignment make_folds(std::size_t n, std::size_t k, std::uint64_t seed, std::span<const int> strata) {
    if (k < 2) throw DataError("k must be at least 2");
    if (k > n) throw DataError("k (" + std::to_string(k) + ") exceeds row count (" + std::to_string(n) + ")");
    if (!strata.empty() && strata.size() != n) throw DataError("strata do not match row count");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    if (!strata.empty()) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return strata[a] < strata[b]; });
    }

    FoldAssignment f{n, k, seed, std::vector<std::size_t>(n)};
    for (std::size_t pos = 0; pos < n; ++pos) f.assignment[order[pos]] = pos % k;
    return f;
}

std::string_view model_label(ModelKind kind) {
    switch (kind) {
        case ModelKind::pls: return "SEM";
        case ModelKind::forest: return "RF";
        case ModelKind::mlp: return "MLP";
    }
    return "?";
}

std::vector<std::string> feature_columns(const EncodedMatrix& m, const ValidatedModel& model) {
    std::set<std::string> wanted;
    for (const auto& c : model.spec.constructs) {
        for (const auto& ind : c.indicators) {
            if (ind.kind == IndicatorKind::binary_outcome) continue;
            if (const auto it = m.indicator_columns.find(ind.name); it != m.indicator_columns.end()) {
                wanted.insert(it->second.begin(), it->second.end());
            } else if (m.find_column(ind.name)) {
                wanted.insert(ind.name);
            }
        }
    }
    std::vector<std::string> out;
    for (const auto& name : m.column_names) {
        if (wanted.count(name)) out.push_back(name);
    }
    return out;
}

std::vector<int> outcome_labels(const EncodedMatrix& m, const ValidatedModel& model) {
    const auto col = m.find_column(model.outcome_indicator());
    if (!col) throw DataError("outcome column '" + model.outcome_indicator() + "' not present");
    std::vector<int> labels(static_cast<std::size_t>(m.rows()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*col)) >= 0.5 ? 1 : 0;
    }
    return labels;
}

namespace {

EncodedMatrix features_only(const EncodedMatrix& m, const std::vector<std::string>& keep) {
    std::vector<std::string> drop;
    for (const auto& name : m.column_names) {
        if (std::find(keep.begin(), keep.end(), name) == keep.end()) drop.push_back(name);
    }
    return m.without_columns(drop);
}

PredictionSet run_fold(const EncodedMatrix& train, const EncodedMatrix& test, const ModelRunner& runner) {
    switch (runner.kind) {
        case ModelKind::pls: {
            const FittedPls fit = train_pls(train, *runner.model, runner.pls);
            return predict_pls(fit, test, runner.threshold);
        }
        case ModelKind::forest: {
            const auto cols = feature_columns(train, *runner.model);
            const auto labels = outcome_labels(train, *runner.model);
            const ForestModel f = fit_forest(features_only(train, cols), labels, runner.forest);
            return predict_forest(f, features_only(test, cols), runner.threshold);
        }
        case ModelKind::mlp: {
            const auto cols = feature_columns(train, *runner.model);
            const auto labels = outcome_labels(train, *runner.model);
            const MlpModel f = fit_mlp(features_only(train, cols), labels, runner.mlp);
            return predict_mlp(f, features_only(test, cols), runner.threshold);
        }
    }
    return {};
}

}  // namespace

PredictionSet cross_validate(const EncodedMatrix& data, const ModelRunner& runner, const FoldAssignment& folds) {
    if (!runner.model) throw DataError("cross-validation needs a model");
    if (folds.n != static_cast<std::size_t>(data.rows())) throw DataError("fold assignment does not match row count");
    const auto truth = outcome_labels(data, *runner.model);

    PredictionSet out;
    out.rows.resize(folds.n);
    for (std::size_t fold = 0; fold < folds.k; ++fold) {
        const auto test = folds.test_rows(fold);
        const auto train = folds.train_rows(fold);
        PredictionSet part;
        try {
            part = run_fold(data.select_rows(train), data.select_rows(test), runner);
        } catch (const Error& e) {
            rethrow_with_context(e, "fold " + std::to_string(fold) + ": ");
        }
        for (std::size_t i = 0; i < test.size(); ++i) {
            Prediction p = part.rows[i];
            p.row = test[i];
            p.truth = truth[test[i]];
            p.fold = static_cast<int>(fold);
            out.rows[test[i]] = p;
        }
    }
    return out;
}

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
    const auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    MetricsReport m{tp, fp, fn, tn};
    m.accuracy = ratio(tp + tn, tp + fp + fn + tn);
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    const double denom = m.precision + m.recall;
    m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    return m;
}

MetricsReport classification_metrics(const PredictionSet& p) {
    if (p.rows.empty()) throw DataError("no predictions to score");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& r : p.rows) {
        if (!r.truth) throw DataError("prediction for row " + std::to_string(r.row) + " has no ground truth");
        const bool actual = *r.truth == 1;
        if (r.label == 1) {
            ++(actual ? tp : fp);
        } else {
            ++(actual ? fn : tn);
        }
    }
    return metrics_from_counts(tp, fp, fn, tn);
}

namespace {

BenchmarkRow benchmark_one(const std::string& label, const EncodedMatrix& raw, const ValidatedModel& model,
                           const BenchmarkConfig& cfg, std::vector<std::string>& warnings) {
    EncodedMatrix data = raw;
    std::vector<std::string> constant;
    const auto features = feature_columns(raw, model);
    for (const auto& col : zero_variance_columns(raw)) {
        if (std::find(features.begin(), features.end(), col) != features.end()) constant.push_back(col);
    }
    if (!constant.empty()) {
        for (const auto& col : constant) warnings.push_back(label + ": dropped zero-variance column '" + col + "'");
        data = raw.without_columns(constant);
    }

    std::vector<int> strata;
    if (cfg.stratified) strata = outcome_labels(data, model);
    const FoldAssignment folds = make_folds(static_cast<std::size_t>(data.rows()), cfg.k, cfg.seed, strata);

    BenchmarkRow row;
    row.dataset = label;
    row.n = static_cast<std::size_t>(data.rows());
    for (auto kind : kAllModels) {
        ModelRunner runner{kind, &model, cfg.pls, cfg.forest, cfg.mlp, cfg.threshold};
        if (cfg.fold_observer) cfg.fold_observer(label, kind, folds);
        try {
            row.cells.push_back({kind, classification_metrics(cross_validate(data, runner, folds))});
        } catch (const Error& e) {
            rethrow_with_context(e, "dataset " + label + ", model " + std::string(model_label(kind)) + ", ");
        }
    }
    double best = -1.0;
    for (const auto& c : row.cells) {
        if (c.metrics.f1 > best) {
            best = c.metrics.f1;
            row.best = c.model;
        }
    }
    return row;
}

}  // namespace

BenchmarkTable benchmark_suite(std::span<const LabeledDataset> datasets, const ValidatedModel& model,
                               const BenchmarkConfig& cfg) {
    if (datasets.empty()) throw DataError("benchmark needs at least one dataset");
    BenchmarkTable table;
    table.k = cfg.k;
    table.seed = cfg.seed;
    std::vector<EncodedMatrix> parts;
    for (const auto& d : datasets) {
        table.rows.push_back(benchmark_one(d.label, d.data, model, cfg, table.warnings));
        parts.push_back(d.data);
    }
    if (datasets.size() == 1) {
        BenchmarkRow combined = table.rows.front();
        combined.dataset = "Combined";
        table.rows.push_back(combined);
    } else {
        table.rows.push_back(benchmark_one("Combined", concat_rows(parts), model, cfg, table.warnings));
    }
    return table;
}

std::string format_benchmark_table(const BenchmarkTable& table) {
    std::size_t width = 7;
    for (const auto& r : table.rows) width = std::max(width, r.dataset.size());
    std::ostringstream out;
    char buf[64];
    out << std::string(width, ' ') << "        ";
    for (auto kind : kAllModels) {
        std::snprintf(buf, sizeof buf, " | %-13s", std::string(model_label(kind)).c_str());
        out << buf;
    }
    out << '\n';
    std::snprintf(buf, sizeof buf, "%-*s %6s ", static_cast<int>(width), "Dataset", "N");
    out << buf;
    for (std::size_t i = 0; i < kAllModels.size(); ++i) out << " | " << " Acc    F1   ";
    out << '\n' << std::string(width + 8, '-');
    for (std::size_t i = 0; i < kAllModels.size(); ++i) out << "-+-" << std::string(13, '-');
    out << '\n';
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof buf, "%-*s %6zu ", static_cast<int>(width), r.dataset.c_str(), r.n);
        out << buf;
        for (const auto& c : r.cells) {
            std::snprintf(buf, sizeof buf, " | %5.2f  %5.2f%s", c.metrics.accuracy, c.metrics.f1,
                          c.model == r.best ? "*" : " ");
            out << buf;
        }
        out << '\n';
    }
    out << "(* best F1 per row; " << table.k << "-fold CV, seed " << table.seed << ")\n";
    return out.str();
}

std::string GroupRecall::display() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f (%zu/%zu)", fraction(), recalled, total);
    return buf;
}

RangeReport recall_aggregates(const RawTable& data, std::string_view outcome_column) {
    for (std::string_view col : {std::string_view("study"), std::string_view("participant"), std::string_view("object"), outcome_column}) {
        if (!data.has_column(col)) throw DataError("missing column '" + std::string(col) + "'");
    }
    if (data.rows.empty()) throw DataError("no rows to aggregate");

    using Key = std::pair<std::string, std::string>;
    std::map<Key, GroupRecall> participants, objects;
    std::vector<std::string> study_order;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const auto& study = data.value(i, "study");
        const auto& text = data.value(i, outcome_column);
        const auto v = parse_number(text);
        if (!v || (*v != 0.0 && *v != 1.0)) {
            throw DataError("row " + std::to_string(i + 1) + ": outcome '" + text + "' is not 0/1");
        }
        if (std::find(study_order.begin(), study_order.end(), study) == study_order.end()) study_order.push_back(study);
        for (auto [map, id] : {std::pair{&participants, data.value(i, "participant")}, std::pair{&objects, data.value(i, "object")}}) {
            auto& g = (*map)[{study, id}];
            g.study = study;
            g.id = id;
            g.total += 1;
            g.recalled += *v == 1.0 ? 1 : 0;
        }
    }

    RangeReport report;
    for (auto& [k, g] : participants) report.participants.push_back(g);
    for (auto& [k, g] : objects) report.objects.push_back(g);
    std::sort(study_order.begin(), study_order.end());
    for (const auto& study : study_order) {
        StudyRange s;
        s.study = study;
        const auto spread = [&](const std::vector<GroupRecall>& groups, double& lo, double& hi, double& range) {
            lo = 1.0;
            hi = 0.0;
            for (const auto& g : groups) {
                if (g.study != study) continue;
                lo = std::min(lo, g.fraction());
                hi = std::max(hi, g.fraction());
            }
            range = hi - lo;
        };
        spread(report.participants, s.participant_min, s.participant_max, s.participant_range);
        spread(report.objects, s.object_min, s.object_max, s.object_range);
        report.studies.push_back(s);
    }
    return report;
}

void to_json(nlohmann::json& j, const MetricsReport& m) {
    j = {{"tp", m.tp},
         {"fp", m.fp},
         {"fn", m.fn},
         {"tn", m.tn},
         {"accuracy", m.accuracy},
         {"precision", m.precision},
         {"recall", m.recall},
         {"f1", m.f1}};
}

void to_json(nlohmann::json& j, const BenchmarkTable& t) {
    auto rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
        auto models = nlohmann::json::object();
        for (const auto& c : r.cells) models[std::string(model_label(c.model))] = c.metrics;
        rows.push_back({{"dataset", r.dataset}, {"n", r.n}, {"models", models}, {"best", model_label(r.best)}});
    }
    j = {{"k", t.k}, {"seed", t.seed}, {"rows", rows}, {"warnings", t.warnings}};
}

void to_json(nlohmann::json& j, const RangeReport& r) {
    const auto groups = [](const std::vector<GroupRecall>& gs, const char* id_key) {
        auto out = nlohmann::json::array();
        for (const auto& g : gs) {
            out.push_back({{"study", g.study},
                           {id_key, g.id},
                           {"recalled", g.recalled},
                           {"total", g.total},
                           {"fraction", g.fraction()},
                           {"display", g.display()}});
        }
        return out;
    };
    auto studies = nlohmann::json::array();
    for (const auto& s : r.studies) {
        studies.push_back({{"study", s.study},
                           {"participant", {{"min", s.participant_min}, {"max", s.participant_max}, {"range", s.participant_range}}},
                           {"object", {{"min", s.object_min}, {"max", s.object_max}, {"range", s.object_range}}}});
    }
    j = {{"participants", groups(r.participants, "participant")}, {"objects", groups(r.objects, "object")}, {"studies", studies}};
}

void to_json(nlohmann::json& j, const FoldAssignment& f) {
    j = {{"n", f.n}, {"k", f.k}, {"seed", f.seed}, {"assignment", f.assignment}};
}

}  // namespace pathlens
