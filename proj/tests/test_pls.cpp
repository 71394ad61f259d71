#include <catch_amalgamated.hpp>

#include <cmath>

#include "pathlens/error.hpp"
#include "pathlens/pls.hpp"
#include "pathlens/random.hpp"
#include "pathlens/synth.hpp"

using namespace pathlens;
using Catch::Matchers::WithinAbs;

namespace {

const char* kThreePredictors =
    "construct A formative\n indicator x1 numeric\n"
    "construct B formative\n indicator x2 numeric\n"
    "construct C formative\n indicator x3 numeric\n"
    "construct Y reflective\n indicator y binary-outcome\n"
    "path A -> Y\npath B -> Y\npath C -> Y\n";

const char* kTwoConstructs = "construct X formative\n indicator x numeric\nconstruct Y reflective\n indicator y binary-outcome\npath X -> Y\n";

EncodedMatrix columns(std::vector<std::string> names, const Eigen::MatrixXd& v) {
    return EncodedMatrix::from_columns(std::move(names), v);
}

EncodedMatrix synthetic(const SynthConfig& cfg) {
    return encode_indicators(generate_synthetic(cfg), builtin_recall_model());
}

SynthConfig single_study(std::size_t n, std::uint64_t seed) {
    SynthConfig cfg = four_study_config();
    cfg.studies = {{"S1", n, 0.6, 6, {{"user_alerted_recall", "false"}}}};
    cfg.seed = seed;
    return cfg;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ca = a.array() - a.mean();
    const Eigen::VectorXd cb = b.array() - b.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

double sample_sd(const Eigen::VectorXd& v) {
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("perfectly correlated constructs") {
    const auto model = validate_model(parse_model_spec(kTwoConstructs));
    Eigen::MatrixXd v(4, 2);
    v << 1, 2, 2, 4, 3, 6, 4, 8;
    const auto fit = train_pls(columns({"x", "y"}, v), model);
    CHECK_THAT(fit.path_coefficient("X", "Y"), WithinAbs(1.0, 1e-12));
    CHECK_THAT(fit.r_squared.at("Y"), WithinAbs(1.0, 1e-12));
    CHECK_THAT(std::abs(fit.weight("x")), WithinAbs(1.0, 1e-12));
    CHECK_THAT(std::abs(fit.weight("y")), WithinAbs(1.0, 1e-12));

    v.col(1) << 4, 3, 2, 1;
    CHECK_THAT(train_pls(columns({"x", "y"}, v), model).path_coefficient("X", "Y"), WithinAbs(-1.0, 1e-12));
}

TEST_CASE("single-indicator paths match the least-squares oracle") {
    const auto model = validate_model(parse_model_spec(kThreePredictors));
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd v(50, 4);
        for (int i = 0; i < 50; ++i) {
            for (int j = 0; j < 3; ++j) v(i, j) = rng.normal() * (j + 1) + j;
            v(i, 3) = 0.4 * v(i, 0) - 0.2 * v(i, 1) + 0.1 * v(i, 2) + rng.normal();
        }
        const auto m = columns({"x1", "x2", "x3", "y"}, v);
        const auto fit = train_pls(m, model);
        const auto oracle = small_case_oracle(m, model);
        REQUIRE(oracle.predictors == std::vector<std::string>{"A", "B", "C"});
        CHECK(oracle.method == "normal-equations-gauss-jordan");
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK_THAT(fit.path_coefficient(oracle.predictors[k], "Y"), WithinAbs(oracle.coefficients[k], 1e-8));
        }
    }
}

TEST_CASE("orthogonal predictors give simple correlations") {
    const auto model = validate_model(parse_model_spec(kThreePredictors));
    Rng rng(5);
    Eigen::MatrixXd raw(40, 3);
    for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 3; ++j) raw(i, j) = rng.normal();
    }
    // centered Gram-Schmidt makes the columns exactly uncorrelated
    Eigen::MatrixXd centered = raw.rowwise() - raw.colwise().mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(centered);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(40, 3);
    Eigen::MatrixXd v(40, 4);
    v.leftCols(3) = q;
    for (int i = 0; i < 40; ++i) v(i, 3) = 0.3 * q(i, 0) + 0.5 * q(i, 1) - 0.2 * q(i, 2) + 0.05 * rng.normal();
    const auto fit = train_pls(columns({"x1", "x2", "x3", "y"}, v), model);
    const char* names[] = {"A", "B", "C"};
    for (int j = 0; j < 3; ++j) {
        CHECK_THAT(fit.path_coefficient(names[j], "Y"), WithinAbs(correlation(v.col(j), v.col(3)), 1e-10));
    }
}

TEST_CASE("fitted model invariants on the built-in model") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(four_study_config());
    const auto fit = train_pls(data, model);
    CHECK(fit.converged);
    CHECK(fit.max_weight_delta < 1e-7);
    CHECK(fit.r_squared.at("Object_Recall") >= 0.0);
    CHECK(fit.r_squared.at("Object_Recall") <= 1.0);

    for (std::size_t j = 0; j < fit.constructs.size(); ++j) {
        const auto& c = fit.constructs[j];
        const Eigen::VectorXd z = fit.construct_scores.col(static_cast<Eigen::Index>(j));
        CHECK(std::abs(z.mean()) < 1e-12);
        CHECK_THAT(sample_sd(z), WithinAbs(1.0, 1e-12));
        CHECK(c.loadings.sum() >= 0.0);
        CHECK(c.loadings.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
    CHECK_THAT(fit.loading("recall"), WithinAbs(1.0, 1e-12));

    // study-constant indicator went through the pooled path
    bool recorded = false;
    for (const auto& fb : fit.diagnostics.pooled_fallbacks) recorded = recorded || fb.column == "user_alerted_recall";
    CHECK(recorded);
}

TEST_CASE("converged weights are a fixed point of one more iteration") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(four_study_config());
    const auto st = standardize_within_group(data);
    const auto fit = fit_pls(st.matrix, model);
    const auto& z = fit.construct_scores;
    const auto index_of = [&](const std::string& name) {
        for (std::size_t j = 0; j < fit.constructs.size(); ++j) {
            if (fit.constructs[j].name == name) return static_cast<Eigen::Index>(j);
        }
        return Eigen::Index{-1};
    };
    for (std::size_t j = 0; j < fit.constructs.size(); ++j) {
        const auto& c = fit.constructs[j];
        const Eigen::VectorXd zj = z.col(static_cast<Eigen::Index>(j));
        std::vector<Eigen::Index> preds;
        Eigen::VectorXd proxy = Eigen::VectorXd::Zero(z.rows());
        for (const auto& p : fit.paths) {
            if (p.target == c.name) preds.push_back(index_of(p.source));
            if (p.source == c.name) proxy += correlation(zj, z.col(index_of(p.target))) * z.col(index_of(p.target));
        }
        if (!preds.empty()) {
            Eigen::MatrixXd zp(z.rows(), static_cast<Eigen::Index>(preds.size()));
            for (std::size_t k = 0; k < preds.size(); ++k) zp.col(static_cast<Eigen::Index>(k)) = z.col(preds[k]);
            proxy += zp * zp.colPivHouseholderQr().solve(zj);
        }
        Eigen::MatrixXd x(z.rows(), static_cast<Eigen::Index>(c.columns.size()));
        for (std::size_t k = 0; k < c.columns.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = st.matrix.column(c.columns[k]);
        const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
        Eigen::VectorXd w(x.cols());
        if (c.mode == MeasurementMode::reflective) {
            for (Eigen::Index k = 0; k < x.cols(); ++k) w(k) = correlation(x.col(k), proxy);
        } else {
            w = xc.colPivHouseholderQr().solve(Eigen::VectorXd(proxy.array() - proxy.mean()));
        }
        w /= sample_sd(xc * w);
        CHECK((w - c.weights).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("rescaling a raw column changes nothing") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(four_study_config());
    auto scaled = data;
    for (const char* col : {"scene_lighting", "task_focus", "exposure_time_normalized"}) {
        const auto j = static_cast<Eigen::Index>(scaled.column_index(col));
        scaled.values.col(j) *= 10.0;
    }
    TrainOptions opts;
    const auto a = train_pls(data, model, opts);
    const auto b = train_pls(scaled, model, opts);
    for (std::size_t p = 0; p < a.paths.size(); ++p) CHECK_THAT(b.paths[p].coefficient, WithinAbs(a.paths[p].coefficient, 1e-9));
    for (const auto& c : a.constructs) {
        for (const auto& col : c.columns) CHECK_THAT(b.loading(col), WithinAbs(a.loading(col), 1e-9));
    }
    CHECK_THAT(b.r_squared.at("Object_Recall"), WithinAbs(a.r_squared.at("Object_Recall"), 1e-9));
    const auto pa = predict_pls(a, data);
    const auto pb = predict_pls(b, scaled);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK_THAT(pb.rows[i].value, WithinAbs(pa.rows[i].value, 1e-9));
}

TEST_CASE("in-sample predictions reproduce R squared") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(single_study(600, 9));
    TrainOptions opts;
    opts.standardize.auto_drop = true;
    const auto fit = train_pls(data, model, opts);
    const auto preds = predict_pls(fit, data);
    Eigen::VectorXd value(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i) value(i) = preds.rows[static_cast<std::size_t>(i)].value;
    const double r = correlation(value, data.column("recall"));
    CHECK_THAT(r * r, WithinAbs(fit.r_squared.at("Object_Recall"), 1e-10));
    CHECK(fit.diagnostics.dropped_columns == std::vector<std::string>{"user_alerted_recall"});
}

TEST_CASE("row at its group means predicts the group outcome mean") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(single_study(300, 4));
    TrainOptions opts;
    opts.standardize.auto_drop = true;
    const auto fit = train_pls(data, model, opts);
    auto row = data.select_rows(std::vector<std::size_t>{0});
    for (Eigen::Index j = 0; j < row.cols(); ++j) row.values(0, j) = data.values.col(j).mean();
    const auto p = predict_pls(fit, row);
    CHECK_THAT(p.rows[0].value, WithinAbs(data.column("recall").mean(), 1e-12));
}

TEST_CASE("probability clamps and labels use >= 0.5") {
    CHECK(clamp_probability(1.3) == 1.0);
    CHECK(threshold_label(1.3) == 1);
    CHECK(clamp_probability(-0.2) == 0.0);
    CHECK(threshold_label(0.5) == 1);
    CHECK(threshold_label(0.4999999) == 0);
}

TEST_CASE("estimation failures") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(four_study_config());
    SECTION("non-convergence") {
        TrainOptions opts;
        opts.pls.max_iterations = 1;
        CHECK_THROWS_AS(train_pls(data, model, opts), NumericalError);
    }
    SECTION("collinear formative block") {
        auto bad = data;
        bad.values.col(static_cast<Eigen::Index>(bad.column_index("task_audio"))) =
            2.0 * bad.column("task_focus").array() + 1.0;
        CHECK_THROWS_AS(train_pls(bad, model), NumericalError);
    }
    SECTION("zero-variance indicator") {
        auto bad = data;
        bad.values.col(static_cast<Eigen::Index>(bad.column_index("scene_lighting"))).setConstant(3.0);
        CHECK_THROWS_AS(train_pls(bad, model), DataError);
    }
}

TEST_CASE("bootstrap intervals") {
    SECTION("degenerate data gives a point interval") {
        const auto model = validate_model(parse_model_spec(kTwoConstructs));
        Eigen::MatrixXd v(12, 2);
        for (int i = 0; i < 12; ++i) v.row(i) << i, 3 * i + 1;
        BootstrapOptions opts;
        opts.replicates = 50;
        const auto r = bootstrap_paths(columns({"x", "y"}, v), model, opts);
        CHECK_THAT(r.intervals[0].lower, WithinAbs(1.0, 1e-12));
        CHECK_THAT(r.intervals[0].upper, WithinAbs(1.0, 1e-12));
        CHECK(r.intervals[0].replicates == 50);
    }
    SECTION("covers the true coefficient and is reproducible") {
        const auto model = validate_model(parse_model_spec(kTwoConstructs));
        Rng rng(2024);
        Eigen::MatrixXd v(1000, 2);
        for (int i = 0; i < 1000; ++i) {
            v(i, 0) = rng.normal();
            v(i, 1) = 0.5 * v(i, 0) + std::sqrt(0.75) * rng.normal();
        }
        BootstrapOptions opts;
        opts.replicates = 200;
        opts.seed = 17;
        const auto m = columns({"x", "y"}, v);
        const auto a = bootstrap_paths(m, model, opts);
        CHECK(a.intervals[0].lower <= 0.5);
        CHECK(a.intervals[0].upper >= 0.5);
        CHECK(a.intervals[0].lower <= a.intervals[0].point);
        CHECK(a.intervals[0].point <= a.intervals[0].upper);
        const auto b = bootstrap_paths(m, model, opts);
        CHECK(a.intervals[0].lower == b.intervals[0].lower);
        CHECK(a.intervals[0].upper == b.intervals[0].upper);
    }
    SECTION("type 7 quantiles") {
        CHECK(sample_quantile({4, 1, 3, 2}, 0.5) == 2.5);
        CHECK(sample_quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
        CHECK(sample_quantile({7}, 0.975) == 7.0);
    }
}

TEST_CASE("lever effects equal finite differences") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(four_study_config());
    const auto fit = train_pls(data, model);
    const double delta = 0.25;
    for (std::size_t r : {3u, 200u, 900u}) {
        const auto base = data.select_rows(std::vector<std::size_t>{r});
        const auto report = sensitivity_levers(fit, base, delta);
        const auto before = predict_pls(fit, base).rows[0].value;
        const auto group = report.group;
        for (const auto& e : report.effects) {
            auto bumped = base;
            const auto pos = *fit.standardization.column_position(e.column);
            const double sd = fit.standardization.stats_for(group, pos).sd;
            bumped.values(0, static_cast<Eigen::Index>(bumped.column_index(e.column))) += delta * sd;
            const auto after = predict_pls(fit, bumped).rows[0].value;
            CHECK_THAT(e.effect, WithinAbs(after - before, 1e-10));
            if (e.weight * e.path_coefficient != 0.0) CHECK((e.effect > 0) == (e.weight * e.path_coefficient > 0));
        }
        for (std::size_t k = 1; k < report.effects.size(); ++k) {
            CHECK(std::abs(report.effects[k - 1].effect) >= std::abs(report.effects[k].effect));
        }
    }
    const auto base = data.select_rows(std::vector<std::size_t>{0});
    const std::vector<std::string> only{"object_virtuality"};
    const auto some = sensitivity_levers(fit, base, delta, only);
    CHECK(some.effects.size() == 2);
    const std::vector<std::string> bad{"heart_rate"};
    CHECK_THROWS_AS(sensitivity_levers(fit, base, delta, bad), DataError);
}

TEST_CASE("fitted model survives a JSON round trip") {
    const auto model = validate_model(builtin_recall_model());
    const auto data = synthetic(four_study_config());
    const auto fit = train_pls(data, model);
    const nlohmann::json j = fit;
    const auto back = j.get<FittedPls>();
    CHECK(nlohmann::json(back) == j);
    const auto a = predict_pls(fit, data);
    const auto b = predict_pls(back, data);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.rows[i].value == b.rows[i].value);
    CHECK(j.contains("outer_weights"));
    CHECK(j.contains("path_coefficients"));
    CHECK(j["r_squared"].contains("Object_Recall"));
}
