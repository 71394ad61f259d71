#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>

#include "pathlens/error.hpp"
#include "pathlens/pls.hpp"
#include "pathlens/random.hpp"
#include "pathlens/synth.hpp"

using namespace pathlens;
using Catch::Matchers::WithinAbs;

namespace {

std::string to_csv(const RawTable& t) {
    std::ostringstream out;
    write_csv(out, t);
    return out.str();
}

}  // namespace

TEST_CASE("four-study sizes and determinism") {
    const auto cfg = four_study_config();
    const auto t = generate_synthetic(cfg);
    CHECK(t.rows.size() == 1152);
    CHECK(to_csv(t) == to_csv(generate_synthetic(cfg)));
    auto other = cfg;
    other.seed = 43;
    CHECK(to_csv(t) != to_csv(generate_synthetic(other)));

    std::map<std::string, std::size_t> per_study;
    for (std::size_t i = 0; i < t.rows.size(); ++i) ++per_study[t.value(i, "study")];
    CHECK(per_study == std::map<std::string, std::size_t>{{"S1", 432}, {"S2", 144}, {"S3", 144}, {"S4", 432}});
}

TEST_CASE("base rates land within 1/n") {
    auto cfg = four_study_config();
    for (bool calibrated : {true, false}) {
        cfg.calibrate_noise = calibrated;
        const auto t = generate_synthetic(cfg);
        for (const auto& s : cfg.studies) {
            std::size_t n = 0, ones = 0;
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                if (t.value(i, "study") != s.label) continue;
                ++n;
                ones += t.value(i, "recall") == "1" ? 1 : 0;
            }
            CHECK(n == s.n);
            CHECK(std::abs(static_cast<double>(ones) / static_cast<double>(n) - s.base_rate) <= 1.0 / static_cast<double>(n));
        }
    }
}

TEST_CASE("study constants are honored") {
    const auto t = generate_synthetic(four_study_config());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        CHECK(t.value(i, "user_alerted_recall") == (t.value(i, "study") == "S4" ? "true" : "false"));
        const double e = std::stod(t.value(i, "exposure_time_normalized"));
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
    }
}

TEST_CASE("noiseless generation is recovered almost perfectly") {
    SynthConfig cfg;
    cfg.model_document = "construct Cause formative\n indicator flag boolean\n"
                         "construct Outcome reflective\n indicator hit binary-outcome\npath Cause -> Outcome\n";
    cfg.studies = {{"S1", 400, 0.5, 4, {}}};
    cfg.true_paths = {{"Cause", "Outcome", 0.8}};
    cfg.formative_weights = {{"flag", 1.0}};
    cfg.noise_sd = 0.0;
    const auto t = generate_synthetic(cfg);
    const auto spec = parse_model_spec(cfg.model_document);
    const auto m = encode_indicators(t, spec);
    const auto fit = train_pls(m, validate_model(spec));
    CHECK(fit.r_squared.at("Outcome") > 0.9);
    CHECK(fit.path_coefficient("Cause", "Outcome") > 0.9);
}

TEST_CASE("degenerate latent outcome is rejected") {
    SynthConfig cfg;
    cfg.model_document = "construct Cause formative\n indicator flag boolean\n"
                         "construct Outcome reflective\n indicator hit binary-outcome\npath Cause -> Outcome\n";
    cfg.studies = {{"S1", 50, 0.5, 5, {{"flag", "true"}}}, {"S2", 50, 0.5, 5, {}}};
    cfg.true_paths = {{"Cause", "Outcome", 0.8}};
    cfg.formative_weights = {{"flag", 1.0}};
    cfg.noise_sd = 0.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), DataError);

    cfg.studies = {{"S1", 5, 0.5, 1, {}}};
    CHECK_THROWS_AS(generate_synthetic(cfg), DataError);
    cfg.studies = {{"S1", 50, 1.0, 1, {}}};
    CHECK_THROWS_AS(generate_synthetic(cfg), DataError);
}

TEST_CASE("config JSON round trip") {
    const auto cfg = four_study_config();
    const nlohmann::json j = cfg;
    const auto back = j.get<SynthConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(to_csv(generate_synthetic(back)) == to_csv(generate_synthetic(cfg)));
}

TEST_CASE("oracle closed forms") {
    const auto spec = parse_model_spec("construct A formative\n indicator a numeric\n"
                                       "construct Y reflective\n indicator y binary-outcome\npath A -> Y\n");
    Eigen::MatrixXd v(5, 2);
    v << 1, 3, 2, 5, 3, 7, 4, 9, 5, 11;
    const auto r = small_case_oracle(EncodedMatrix::from_columns({"a", "y"}, v), validate_model(spec));
    CHECK_THAT(r.coefficients[0], WithinAbs(1.0, 1e-12));

    const auto two = parse_model_spec("construct A formative\n indicator a numeric\n indicator b numeric\n"
                                      "construct Y reflective\n indicator y binary-outcome\npath A -> Y\n");
    Eigen::MatrixXd w(5, 3);
    w << 1, 2, 3, 2, 1, 5, 3, 3, 7, 4, 5, 9, 5, 4, 11;
    CHECK_THROWS_AS(small_case_oracle(EncodedMatrix::from_columns({"a", "b", "y"}, w), validate_model(two)), DataError);
}
