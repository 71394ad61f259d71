// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

#include "cli.hpp"
#include "json.hpp"
#include "pathlens/error.hpp"
#include "pathlens/evaluation.hpp"
#include "pathlens/forest.hpp"
#include "pathlens/mlp.hpp"
#include "pathlens/pls.hpp"
#include "pathlens/random.hpp"
#include "pathlens/synth.hpp"

using namespace pathlens;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %-28s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

EncodedMatrix encode(const RawTable& t) { return encode_indicators(t, builtin_recall_model()); }

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "pathlens");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
    return code;
}

double all_positive_f1(const std::vector<int>& labels) {
    std::size_t pos = 0;
    for (int y : labels) pos += static_cast<std::size_t>(y);
    return metrics_from_counts(pos, labels.size() - pos, 0, 0).f1;
}

}  // namespace

int main() {
    const ValidatedModel builtin = validate_model(builtin_recall_model());

    report(1, "closed-form equivalence", [] {
        const auto model = validate_model(parse_model_spec("construct A formative\n indicator x1 numeric\n"
                                                           "construct B formative\n indicator x2 numeric\n"
                                                           "construct C formative\n indicator x3 numeric\n"
                                                           "construct Y reflective\n indicator y binary-outcome\n"
                                                           "path A -> Y\npath B -> Y\npath C -> Y\n"));
        const auto start = std::chrono::steady_clock::now();
        Rng rng(20240601);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::MatrixXd v(50, 4);
            const double b[3] = {rng.normal(), rng.normal(), rng.normal()};
            for (int i = 0; i < 50; ++i) {
                for (int j = 0; j < 3; ++j) v(i, j) = rng.normal() + 0.3 * (j > 0 ? v(i, j - 1) : 0.0);
                v(i, 3) = b[0] * v(i, 0) + b[1] * v(i, 1) + b[2] * v(i, 2) + rng.normal();
            }
            const auto m = EncodedMatrix::from_columns({"x1", "x2", "x3", "y"}, v);
            const auto fit = train_pls(m, model);
            const auto oracle = small_case_oracle(m, model);
            for (std::size_t k = 0; k < 3; ++k) {
                worst = std::max(worst, std::abs(fit.path_coefficient(oracle.predictors[k], "Y") - oracle.coefficients[k]));
            }
        }
        const double secs = elapsed_since(start);
        return Outcome{worst <= 1e-8 && secs < 1.0, fmt("max |beta - oracle| = %.2e (tol 1e-08), 20 instances in %.3f s (limit 1 s)", worst, secs)};
    });

    report(2, "degenerate correctness", [] {
        const auto model = validate_model(parse_model_spec(
            "construct X formative\n indicator x numeric\nconstruct Y reflective\n indicator y binary-outcome\npath X -> Y\n"));
        Eigen::MatrixXd v(4, 2);
        v << 1, 2, 2, 4, 3, 6, 4, 8;
        const auto pos = train_pls(EncodedMatrix::from_columns({"x", "y"}, v), model);
        v.col(1) << 4, 3, 2, 1;
        const auto neg = train_pls(EncodedMatrix::from_columns({"x", "y"}, v), model);
        const double b1 = pos.path_coefficient("X", "Y");
        const double r2 = pos.r_squared.at("Y");
        const double b2 = neg.path_coefficient("X", "Y");
        const bool ok = std::abs(b1 - 1) <= 1e-9 && std::abs(r2 - 1) <= 1e-9 && std::abs(b2 + 1) <= 1e-9;
        return Outcome{ok, fmt("beta = %.12f, R2 = %.12f, anticorrelated beta = %.12f (tol 1e-09)", b1, r2, b2)};
    });

    report(3, "synthetic parameter recovery", [&] {
        const auto start = std::chrono::steady_clock::now();
        const SynthConfig cfg = four_study_config(5000.0 / 1152.0);
        const auto data = encode(generate_synthetic(cfg));
        const auto fit = train_pls(data, builtin);
        const double secs = elapsed_since(start);
        double worst = 0.0;
        std::string detail;
        for (const auto& p : cfg.true_paths) {
            const double b = fit.path_coefficient(p.source, p.target);
            worst = std::max(worst, std::abs(b - p.value));
            detail += p.source + " " + fmt("%.3f (true %.3f); ", b, p.value);
        }
        const bool ok = data.rows() == 5000 && worst <= 0.05 && secs < 10.0;
        return Outcome{ok, detail + fmt("n = %.0f, max error %.3f (tol 0.05), %.2f s (limit 10 s)",
                                        static_cast<double>(data.rows()), worst, secs)};
    });

    report(4, "scale invariance", [&] {
        const auto data = encode(generate_synthetic(four_study_config()));
        const auto base = train_pls(data, builtin);
        const auto base_pred = predict_pls(base, data);
        double worst = 0.0;
        std::size_t checked = 0;
        for (const auto& c : builtin.spec.constructs) {
            for (const auto& ind : c.indicators) {
                if (ind.kind != IndicatorKind::numeric) continue;
                auto scaled = data;
                scaled.values.col(static_cast<Eigen::Index>(scaled.column_index(ind.name))) *= 10.0;
                const auto fit = train_pls(scaled, builtin);
                for (std::size_t p = 0; p < base.paths.size(); ++p) {
                    worst = std::max(worst, std::abs(fit.paths[p].coefficient - base.paths[p].coefficient));
                }
                for (const auto& con : base.constructs) {
                    for (const auto& col : con.columns) worst = std::max(worst, std::abs(fit.loading(col) - base.loading(col)));
                }
                const auto pred = predict_pls(fit, scaled);
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    worst = std::max(worst, std::abs(pred.rows[i].value - base_pred.rows[i].value));
                }
                ++checked;
            }
        }
        return Outcome{worst <= 1e-9, fmt("%.0f numeric columns x10, max change %.2e (tol 1e-09)", static_cast<double>(checked), worst)};
    });

    report(5, "MLP gradient check", [] {
        Rng rng(555);
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::MatrixXd x(16, 4);
            Eigen::VectorXd y(16);
            for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
            for (Eigen::Index i = 0; i < 16; ++i) y(i) = static_cast<double>(rng.index(2));
            Eigen::VectorXd theta(static_cast<Eigen::Index>(mlp_parameter_count(4, 10)));
            for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = rng.uniform(-0.5, 0.5);
            Eigen::VectorXd g;
            mlp_objective(theta, x, y, 10, 0.1, &g);
            Eigen::VectorXd fd(theta.size());
            for (Eigen::Index k = 0; k < theta.size(); ++k) {
                Eigen::VectorXd up = theta, dn = theta;
                up(k) += 1e-5;
                dn(k) -= 1e-5;
                fd(k) = (mlp_objective(up, x, y, 10, 0.1) - mlp_objective(dn, x, y, 10, 0.1)) / 2e-5;
            }
            worst = std::max(worst, (g - fd).norm() / fd.norm());
        }
        return Outcome{worst < 1e-5, fmt("max relative error %.2e over 10 instances (tol 1e-05)", worst)};
    });

    report(6, "forest memorization", [] {
        Rng rng(66);
        Eigen::MatrixXd x(50, 9);
        std::vector<int> y(50);
        for (int i = 0; i < 50; ++i) {
            for (int j = 0; j < 9; ++j) x(i, j) = rng.normal();
            y[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(2));
        }
        std::vector<std::string> names;
        for (int j = 0; j < 9; ++j) names.push_back("f" + std::to_string(j));
        const auto m = EncodedMatrix::from_columns(names, x);
        ForestConfig cfg;
        cfg.tree_count = 1;
        cfg.bootstrap = false;
        const auto f = fit_forest(m, y, cfg);
        const auto p = predict_forest(f, m);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < p.size(); ++i) correct += p.rows[i].label == y[i] ? 1 : 0;
        const double acc = static_cast<double>(correct) / 50.0;
        return Outcome{acc == 1.0 && f.features_per_split == 3,
                       fmt("training accuracy %.4f (need 1.0), features_per_split %.0f for p=9 (need 3)", acc,
                           static_cast<double>(f.features_per_split))};
    });

    report(7, "metrics identities", [] {
        const auto m = metrics_from_counts(3, 1, 2, 4);
        PredictionSet none;
        for (int i = 0; i < 5; ++i) none.rows.push_back({static_cast<std::size_t>(i), 0.1, 0.1, 0, 0, -1});
        const auto z = classification_metrics(none);
        const bool ok = std::abs(m.accuracy - 0.7) < 1e-15 && std::abs(m.precision - 0.75) < 1e-15 &&
                        std::abs(m.recall - 0.6) < 1e-15 && std::abs(m.f1 - 2.0 / 3.0) < 1e-15 && z.precision == 0.0 &&
                        z.recall == 0.0 && z.f1 == 0.0;
        return Outcome{ok, fmt("acc %.4f prec %.4f rec %.4f", m.accuracy, m.precision, m.recall) +
                               fmt(" f1 %.6f; zero-denominator f1 %.1f", m.f1, z.f1)};
    });

    report(8, "shared folds contract", [&] {
        const auto raw = encode(generate_synthetic(four_study_config()));
        std::vector<LabeledDataset> sets;
        for (const std::string study : {"S1", "S2", "S3", "S4"}) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < raw.row_meta.size(); ++i) {
                if (raw.row_meta[i].study == study) rows.push_back(i);
            }
            sets.push_back({study, raw.select_rows(rows)});
        }
        BenchmarkConfig cfg;
        cfg.seed = 42;
        std::map<std::string, std::vector<std::pair<const FoldAssignment*, FoldAssignment>>> seen;
        cfg.fold_observer = [&](const std::string& d, ModelKind, const FoldAssignment& f) { seen[d].push_back({&f, f}); };
        const auto a = benchmark_suite(sets, builtin, cfg);
        bool shared = seen.size() == 5;
        for (const auto& [d, uses] : seen) {
            shared = shared && uses.size() == 3;
            for (const auto& u : uses) shared = shared && u.first == uses.front().first && u.second == uses.front().second;
        }
        cfg.fold_observer = nullptr;
        const auto b = benchmark_suite(sets, builtin, cfg);
        const bool same = nlohmann::json(a).dump() == nlohmann::json(b).dump();
        return Outcome{shared && same, std::string("3 models x 5 datasets share one FoldAssignment each: ") +
                                           (shared ? "yes" : "no") + "; seed-42 reruns bit-identical: " + (same ? "yes" : "no")};
    });

    report(9, "end-to-end benchmark", [&] {
        const fs::path dir = fs::temp_directory_path() / ("pathlens_accept_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        const auto start = std::chrono::steady_clock::now();
        const std::string demo = (dir / "demo.csv").string();
        const std::string table = (dir / "table.json").string();
        bool ok = run_cli({"simulate", "--preset", "four-study", "--out", demo}) == 0;
        ok = ok && run_cli({"benchmark", "--data", demo, "--by-study", "--k", "10", "--seed", "42", "--out", table}) == 0;
        const double secs = elapsed_since(start);
        std::string detail = "CLI run failed";
        if (ok) {
            std::ifstream in(table);
            const auto t = nlohmann::json::parse(in);
            bool cells = true;
            for (const auto& row : t["rows"]) {
                for (const auto& [name, m] : row["models"].items()) {
                    for (const char* key : {"accuracy", "f1"}) cells = cells && m[key] >= 0.0 && m[key] <= 1.0;
                }
            }
            const auto& last = t["rows"].back();
            const bool combined = last["dataset"] == "Combined" && last["n"] == 1152;
            std::string ns;
            for (const auto& row : t["rows"]) ns += std::to_string(row["n"].get<int>()) + " ";
            ok = cells && combined && t["rows"].size() == 5 && secs < 60.0;
            detail = "N = " + ns + "cells in [0,1]: " + (cells ? "yes" : "no") + fmt(", %.1f s (limit 60 s)", secs);
        }

        // Strong signal: balanced classes, large paths, little noise.
        SynthConfig strong = four_study_config();
        for (auto& s : strong.studies) s.base_rate = 0.5;
        strong.true_paths = {{"Object", "Object_Recall", 0.6}, {"Scene", "Object_Recall", 0.6}, {"User_State", "Object_Recall", -0.6}};
        strong.calibrate_noise = false;
        strong.noise_sd = 0.1;
        const auto raw = encode(generate_synthetic(strong));
        std::vector<LabeledDataset> sets;
        for (const std::string study : {"S1", "S2", "S3", "S4"}) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < raw.row_meta.size(); ++i) {
                if (raw.row_meta[i].study == study) rows.push_back(i);
            }
            sets.push_back({study, raw.select_rows(rows)});
        }
        const auto t = benchmark_suite(sets, builtin, BenchmarkConfig{});
        bool beats = true;
        double margin = 1.0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& data = r < sets.size() ? sets[r].data : raw;
            const double base = all_positive_f1(outcome_labels(data, builtin));
            for (const auto& c : t.rows[r].cells) {
                beats = beats && c.metrics.f1 > base;
                margin = std::min(margin, c.metrics.f1 - base);
            }
        }
        fs::remove_all(dir);
        return Outcome{ok && beats, detail + fmt("; strong signal: min F1 - all-positive F1 = %.3f", margin)};
    });

    report(10, "pooled-fallback standardization", [&] {
        const auto data = encode(generate_synthetic(four_study_config()));
        const auto fit = train_pls(data, builtin);
        std::size_t hits = 0;
        for (const auto& fb : fit.diagnostics.pooled_fallbacks) hits += fb.column == "user_alerted_recall" ? 1 : 0;
        return Outcome{hits == 4, fmt("user_alerted_recall pooled fallback recorded for %.0f of 4 studies", static_cast<double>(hits))};
    });

    report(11, "sensitivity consistency", [&] {
        const auto data = encode(generate_synthetic(four_study_config()));
        const auto fit = train_pls(data, builtin);
        const double delta = 0.1;
        double worst = 0.0;
        std::size_t compared = 0;
        for (std::size_t r = 0; r < static_cast<std::size_t>(data.rows()); r += 37) {
            const auto row = data.select_rows(std::vector<std::size_t>{r});
            const auto rep = sensitivity_levers(fit, row, delta);
            const double before = predict_pls(fit, row).rows[0].value;
            if (before < 0.0 || before > 1.0) continue;
            for (const auto& e : rep.effects) {
                auto bumped = row;
                const double sd = fit.standardization.stats_for(rep.group, *fit.standardization.column_position(e.column)).sd;
                bumped.values(0, static_cast<Eigen::Index>(bumped.column_index(e.column))) += delta * sd;
                const double after = predict_pls(fit, bumped).rows[0].value;
                if (after < 0.0 || after > 1.0) continue;
                worst = std::max(worst, std::abs(e.effect - (after - before)));
                ++compared;
            }
        }
        return Outcome{compared > 100 && worst <= 1e-10,
                       fmt("%.0f lever/row pairs, max |effect - finite difference| = %.2e (tol 1e-10)",
                           static_cast<double>(compared), worst)};
    });

    std::printf("%s: %d of 11 criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
