#include "cli.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "manifest.hpp"
#include "pathlens/dataset.hpp"
#include "pathlens/error.hpp"
#include "pathlens/evaluation.hpp"
#include "pathlens/model_spec.hpp"
#include "pathlens/pls.hpp"
#include "pathlens/synth.hpp"

namespace pathlens::cli {

namespace {

using nlohmann::json;

struct UsageError : Error {
    explicit UsageError(const std::string& m) : Error(ErrorKind::usage, m) {}
};

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError(path + ": invalid JSON (" + e.what() + ")");
    }
}

/// Writes `content` to `out_path` (plus its manifest) or to stdout (manifest on stderr).
void emit(const std::string& out_path, const std::string& content, const json& manifest, std::ostream& out,
          std::ostream& err) {
    if (out_path.empty()) {
        out << content;
        err << manifest.dump() << '\n';
        return;
    }
    std::ofstream file(out_path, std::ios::binary);
    if (!file) throw DataError("cannot write '" + out_path + "'");
    file << content;
    std::ofstream m(out_path + ".manifest.json", std::ios::binary);
    if (!m) throw DataError("cannot write '" + out_path + ".manifest.json'");
    m << manifest.dump(2) << '\n';
}

/// Stacks CSVs whose headers hold the same column set, aligned to the first.
RawTable merge_tables(const std::vector<RawTable>& tables, const std::vector<std::string>& names) {
    RawTable merged;
    merged.header = tables.front().header;
    for (std::size_t t = 0; t < tables.size(); ++t) {
        const auto& tab = tables[t];
        if (tab.header.size() != merged.header.size()) throw DataError(names[t] + ": columns differ from " + names[0]);
        std::vector<std::size_t> map;
        for (const auto& col : merged.header) {
            if (!tab.has_column(col)) throw DataError(names[t] + ": missing column '" + col + "'");
            map.push_back(tab.column(col));
        }
        for (const auto& row : tab.rows) {
            std::vector<std::string> aligned;
            for (auto idx : map) aligned.push_back(row[idx]);
            merged.rows.push_back(std::move(aligned));
        }
        merged.dropped += tab.dropped;
    }
    return merged;
}

std::string stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

struct Inputs {
    ModelSpec spec;
    EncodedMatrix data;
    std::vector<std::string> labels;
    std::vector<std::vector<std::size_t>> parts;  // row ranges per file
    std::size_t dropped = 0;
};

Inputs load_inputs(const std::vector<std::string>& paths, const ModelSpec& spec, const IngestOptions& opts,
                   const Encoding* fixed = nullptr) {
    Inputs in;
    in.spec = spec;
    std::vector<RawTable> tables;
    for (const auto& p : paths) tables.push_back(ingest_csv(p, spec, opts));
    const RawTable merged = merge_tables(tables, paths);
    in.dropped = merged.dropped;
    in.data = encode_indicators(merged, spec, fixed);
    std::size_t start = 0;
    for (std::size_t t = 0; t < tables.size(); ++t) {
        std::vector<std::size_t> rows(tables[t].rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
        start += rows.size();
        in.labels.push_back(stem(paths[t]));
        in.parts.push_back(std::move(rows));
    }
    return in;
}

FittedPls load_fit(const std::string& path) {
    const json j = read_json(path);
    try {
        return j.get<FittedPls>();
    } catch (const json::exception& e) {
        throw DataError(path + ": not a fitted model (" + e.what() + ")");
    }
}

struct Common {
    std::string model = "builtin";
    std::uint64_t seed = 42;
    double threshold = kDefaultThreshold;
    std::string out;
    std::string group = "study";
    bool auto_drop = false;
};

// ---------------------------------------------------------------------------

int run_fit(const Common& c, const std::vector<std::string>& data, std::size_t bootstrap, double level,
            std::ostream& out, std::ostream& err) {
    const ValidatedModel model = validate_model(load_model_spec(c.model));
    const Inputs in = load_inputs(data, model.spec, {});
    TrainOptions opts;
    opts.standardize = {c.group, c.auto_drop};
    const FittedPls fit = train_pls(in.data, model, opts);

    json j = fit;
    j["rows_used"] = in.data.rows();
    j["rows_dropped"] = in.dropped;
    if (bootstrap > 0) {
        BootstrapOptions b;
        b.replicates = bootstrap;
        b.seed = c.seed;
        b.level = level;
        b.train = opts;
        const auto result = bootstrap_paths(in.data, model, b);
        j["bootstrap"] = {{"intervals", result.intervals}, {"level", level}, {"retries", result.retries}};
    }
    const json config = {{"data", data},       {"model", c.model},         {"group", c.group},
                         {"auto_drop", c.auto_drop}, {"bootstrap", bootstrap}, {"level", level},
                         {"seed", c.seed}};
    std::vector<std::string> inputs = data;
    if (c.model != "builtin") inputs.push_back(c.model);
    emit(c.out, j.dump(2) + "\n", make_manifest("fit", config, inputs), out, err);
    return 0;
}

int run_predict(const Common& c, const std::string& fit_path, const std::vector<std::string>& data, std::ostream& out,
                std::ostream& err) {
    const FittedPls fit = load_fit(fit_path);
    const ModelSpec spec = parse_model_spec(fit.model_document);
    const Inputs in = load_inputs(data, spec, {false}, &fit.encoding);
    const PredictionSet preds = predict_pls(fit, in.data, c.threshold);

    const bool has_truth = !preds.rows.empty() && preds.rows.front().truth.has_value();
    std::ostringstream csv;
    csv << "row,study,participant,object,value,probability,label" << (has_truth ? ",truth" : "") << '\n';
    for (const auto& p : preds.rows) {
        const auto& meta = in.data.row_meta[p.row];
        csv << p.row << ',' << meta.study << ',' << meta.participant << ',' << meta.object << ',' << fmt(p.value) << ','
            << fmt(p.probability) << ',' << p.label;
        if (has_truth) csv << ',' << *p.truth;
        csv << '\n';
    }
    const json config = {{"fit", fit_path}, {"data", data}, {"threshold", c.threshold}};
    std::vector<std::string> inputs = data;
    inputs.insert(inputs.begin(), fit_path);
    emit(c.out, csv.str(), make_manifest("predict", config, inputs), out, err);
    return 0;
}

struct BenchArgs {
    std::vector<std::string> data;
    std::size_t k = 10;
    std::size_t trees = 500;
    std::size_t hidden = 10;
    double decay = 0.1;
    int max_iterations = 1000;
    bool by_study = false;
    bool stratified = false;
    bool text = false;
};

int run_benchmark(const Common& c, const BenchArgs& a, std::ostream& out, std::ostream& err) {
    const ValidatedModel model = validate_model(load_model_spec(c.model));
    const Inputs in = load_inputs(a.data, model.spec, {});

    std::vector<LabeledDataset> sets;
    if (a.by_study) {
        std::vector<std::string> studies;
        std::map<std::string, std::vector<std::size_t>> rows;
        for (std::size_t i = 0; i < in.data.row_meta.size(); ++i) {
            const auto& s = in.data.row_meta[i].study;
            if (!rows.count(s)) studies.push_back(s);
            rows[s].push_back(i);
        }
        for (const auto& s : studies) sets.push_back({s, in.data.select_rows(rows[s])});
    } else {
        for (std::size_t t = 0; t < in.parts.size(); ++t) sets.push_back({in.labels[t], in.data.select_rows(in.parts[t])});
    }

    BenchmarkConfig cfg;
    cfg.k = a.k;
    cfg.seed = c.seed;
    cfg.threshold = c.threshold;
    cfg.stratified = a.stratified;
    cfg.pls.standardize.group_column = c.group;
    cfg.forest.tree_count = a.trees;
    cfg.forest.seed = c.seed;
    cfg.mlp.hidden_units = a.hidden;
    cfg.mlp.decay = a.decay;
    cfg.mlp.max_iterations = a.max_iterations;
    cfg.mlp.seed = c.seed;
    const BenchmarkTable table = benchmark_suite(sets, model, cfg);

    const json config = {{"data", a.data},   {"model", c.model},          {"k", a.k},
                         {"seed", c.seed},   {"threshold", c.threshold},  {"trees", a.trees},
                         {"hidden", a.hidden}, {"decay", a.decay},        {"max_iterations", a.max_iterations},
                         {"by_study", a.by_study}, {"stratified", a.stratified}, {"group", c.group}};
    std::vector<std::string> inputs = a.data;
    if (c.model != "builtin") inputs.push_back(c.model);
    const json manifest = make_manifest("benchmark", config, inputs);
    const std::string text = format_benchmark_table(table);
    if (a.text && c.out.empty()) {
        out << text;
        err << manifest.dump() << '\n';
    } else {
        emit(c.out, json(table).dump(2) + "\n", manifest, out, err);
        if (a.text) out << text;
    }
    for (const auto& w : table.warnings) err << "warning: " << w << '\n';
    return 0;
}

int run_simulate(const Common& c, bool seed_given, const std::string& config_path, const std::string& preset,
                 double scale, bool emit_config, std::ostream& out, std::ostream& err) {
    SynthConfig cfg;
    std::vector<std::string> inputs;
    if (!config_path.empty()) {
        try {
            cfg = read_json(config_path).get<SynthConfig>();
        } catch (const json::exception& e) {
            throw DataError(config_path + ": invalid synthetic config (" + e.what() + ")");
        }
        inputs.push_back(config_path);
    } else if (preset == "four-study") {
        cfg = four_study_config(scale);
    } else {
        throw UsageError("simulate needs --config or --preset four-study");
    }
    if (seed_given) cfg.seed = c.seed;
    if (emit_config) {
        emit(c.out, json(cfg).dump(2) + "\n", make_manifest("simulate", json(cfg), inputs), out, err);
        return 0;
    }
    const RawTable table = generate_synthetic(cfg);
    std::ostringstream csv;
    write_csv(csv, table);
    json config = cfg;
    config["preset"] = preset;
    config["scale"] = scale;
    emit(c.out, csv.str(), make_manifest("simulate", config, inputs), out, err);
    return 0;
}

int run_score(const Common& c, const std::string& fit_path, const std::string& data, double delta,
              const std::vector<std::string>& only, std::ostream& out, std::ostream& err) {
    const FittedPls fit = load_fit(fit_path);
    const ModelSpec spec = parse_model_spec(fit.model_document);
    const Inputs in = load_inputs({data}, spec, {false}, &fit.encoding);
    if (in.data.rows() != 1) {
        throw DataError(data + ": score needs exactly one complete row, found " + std::to_string(in.data.rows()));
    }
    const LeverReport report = sensitivity_levers(fit, in.data, delta, only);
    const json config = {{"fit", fit_path}, {"data", data}, {"delta", delta}, {"only", only}};
    emit(c.out, json(report).dump(2) + "\n", make_manifest("score", config, {fit_path, data}), out, err);
    return 0;
}

int run_aggregate(const Common& c, const std::string& data, const std::string& outcome, std::ostream& out,
                  std::ostream& err) {
    const RangeReport report = recall_aggregates(read_csv_file(data), outcome);
    const json config = {{"data", data}, {"outcome", outcome}};
    emit(c.out, json(report).dump(2) + "\n", make_manifest("aggregate", config, {data}), out, err);
    return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"PLS path models for object recall, with RF/MLP baselines"};
    app.require_subcommand(1);

    Common c;
    const auto common = [&](CLI::App* sub, bool with_model) {
        if (with_model) sub->add_option("--model", c.model, "builtin or a model document path");
        sub->add_option("--out", c.out, "output file (default stdout)");
    };

    std::vector<std::string> data;
    std::string fit_path;

    auto* fit = app.add_subcommand("fit", "fit the PLS path model");
    common(fit, true);
    fit->add_option("--data", data, "input CSV (repeatable; rows are stacked)")->required();
    fit->add_option("--group", c.group, "standardization group: study|participant|object|none");
    fit->add_flag("--auto-drop", c.auto_drop, "drop zero-variance columns instead of failing");
    std::size_t bootstrap = 0;
    double level = 0.95;
    fit->add_option("--bootstrap", bootstrap, "bootstrap replicates for path intervals (0 = off)");
    fit->add_option("--level", level, "interval level")->check(CLI::Range(0.5, 0.999999));
    fit->add_option("--seed", c.seed, "bootstrap seed");

    auto* predict = app.add_subcommand("predict", "score rows with a fitted model");
    common(predict, false);
    predict->add_option("--fit", fit_path, "fitted model JSON")->required();
    predict->add_option("--data", data, "input CSV (repeatable)")->required();
    predict->add_option("--threshold", c.threshold, "label threshold");

    BenchArgs bench;
    auto* benchmark = app.add_subcommand("benchmark", "cross-validate SEM, RF and MLP on shared folds");
    common(benchmark, true);
    benchmark->add_option("--data", bench.data, "input CSV (repeatable; one table row per file)")->required();
    benchmark->add_option("--k", bench.k, "folds")->check(CLI::Range(2, 1000000));
    benchmark->add_option("--seed", c.seed, "seed for folds and baselines");
    benchmark->add_option("--threshold", c.threshold, "label threshold");
    benchmark->add_option("--trees", bench.trees, "random forest size")->check(CLI::PositiveNumber);
    benchmark->add_option("--hidden", bench.hidden, "MLP hidden units")->check(CLI::PositiveNumber);
    benchmark->add_option("--decay", bench.decay, "MLP weight decay")->check(CLI::NonNegativeNumber);
    benchmark->add_option("--max-iter", bench.max_iterations, "MLP iterations")->check(CLI::PositiveNumber);
    benchmark->add_option("--group", c.group, "standardization group for SEM");
    benchmark->add_flag("--by-study", bench.by_study, "one table row per study value instead of per file");
    benchmark->add_flag("--stratified", bench.stratified, "stratify folds by outcome");
    benchmark->add_flag("--text", bench.text, "print the aligned text table to stdout");

    std::string config_path, preset;
    double scale = 1.0;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic study dataset");
    common(simulate, false);
    simulate->add_option("--config", config_path, "synthetic config JSON");
    simulate->add_option("--preset", preset, "built-in config")->check(CLI::IsMember({"four-study"}));
    simulate->add_option("--scale", scale, "multiply preset study sizes")->check(CLI::PositiveNumber);
    auto* seed_opt = simulate->add_option("--seed", c.seed, "override the config seed");
    bool emit_config = false;
    simulate->add_flag("--emit-config", emit_config, "write the resolved config JSON instead of data");

    double delta = 1.0;
    std::vector<std::string> only;
    std::string single;
    auto* score = app.add_subcommand("score", "per-indicator levers for one row");
    common(score, false);
    score->add_option("--fit", fit_path, "fitted model JSON")->required();
    score->add_option("--data", single, "CSV with one row")->required();
    score->add_option("--delta", delta, "indicator change in standardized units");
    score->add_option("--only", only, "restrict to these indicators or columns");

    std::string outcome = "recall";
    auto* aggregate = app.add_subcommand("aggregate", "participant and object recall ranges");
    common(aggregate, false);
    aggregate->add_option("--data", single, "input CSV")->required();
    aggregate->add_option("--outcome", outcome, "outcome column");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (fit->parsed()) return run_fit(c, data, bootstrap, level, out, err);
        if (predict->parsed()) return run_predict(c, fit_path, data, out, err);
        if (benchmark->parsed()) return run_benchmark(c, bench, out, err);
        if (simulate->parsed()) return run_simulate(c, seed_opt->count() > 0, config_path, preset, scale, emit_config, out, err);
        if (score->parsed()) return run_score(c, fit_path, single, delta, only, out, err);
        if (aggregate->parsed()) return run_aggregate(c, single, outcome, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        switch (e.kind()) {
            case ErrorKind::usage: return 1;
            case ErrorKind::data: return 2;
            case ErrorKind::numerical: return 3;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace pathlens::cli
