#include "pathlens/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "pathlens/error.hpp"
#include "pathlens/random.hpp"

namespace pathlens {

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

double mean_of(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
    double s = 0.0;
    for (auto r : rows) s += v[r];
    return s / static_cast<double>(rows.size());
}

double var_of(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
    const double m = mean_of(v, rows);
    double ss = 0.0;
    for (auto r : rows) ss += (v[r] - m) * (v[r] - m);
    return rows.size() > 1 ? ss / static_cast<double>(rows.size() - 1) : 0.0;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

/// Zero-count at a boundary between distinct sorted values, nearest to `target`.
std::size_t binarize_cut(const std::vector<double>& sorted, std::size_t target) {
    std::size_t best = 0;
    std::size_t best_gap = static_cast<std::size_t>(-1);
    for (std::size_t cut = 0; cut <= sorted.size(); ++cut) {
        const bool boundary = cut == 0 || cut == sorted.size() || sorted[cut - 1] < sorted[cut];
        if (!boundary) continue;
        const std::size_t gap = cut > target ? cut - target : target - cut;
        if (gap < best_gap) {
            best_gap = gap;
            best = cut;
        }
    }
    return best;
}

std::vector<std::string> levels_of(const IndicatorSpec& ind, const SynthConfig& cfg) {
    if (!ind.levels.empty()) return ind.levels;
    std::vector<std::string> levels;
    if (ind.reference_level) levels.push_back(*ind.reference_level);
    if (const auto it = cfg.level_probabilities.find(ind.name); it != cfg.level_probabilities.end()) {
        for (const auto& [level, p] : it->second) {
            if (std::find(levels.begin(), levels.end(), level) == levels.end()) levels.push_back(level);
        }
    }
    if (levels.size() < 2) throw DataError("categorical '" + ind.name + "' needs at least two levels to simulate");
    return levels;
}

}  // namespace

SynthConfig four_study_config(double scale) {
    SynthConfig c;
    const auto sized = [&](std::size_t n) { return static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)); };
    c.studies = {
        {"S1", sized(432), 0.85, 9, {{"user_alerted_recall", "false"}}},
        {"S2", sized(144), 0.75, 6, {{"user_alerted_recall", "false"}}},
        {"S3", sized(144), 0.65, 6, {{"user_alerted_recall", "false"}}},
        {"S4", sized(432), 0.37, 18, {{"user_alerted_recall", "true"}}},
    };
    c.true_paths = {
        {"Object", "Object_Recall", 0.103},
        {"Scene", "Object_Recall", 0.095},
        {"User_State", "Object_Recall", -0.471},
    };
    c.formative_weights = {
        {"object_virtualityvirtual", -0.408},
        {"object_virtualitytwin", 0.696},
        {"object_congruence", 0.025},
        {"scene_lighting", 0.063},
        {"scene_congruence", 0.328},
        {"exposure_time_normalized", 0.962},
        {"user_alerted_recall", 1.457},
        {"task_focus", -0.494},
        {"task_audio", 0.477},
        {"ar_familiarity", -0.209},
        {"vr_familiarity", 0.0},
    };
    c.level_probabilities = {{"object_virtuality", {{"physical", 0.4}, {"virtual", 0.3}, {"twin", 0.3}}}};
    c.boolean_rates = {{"object_congruence", 0.5}};
    c.distributions = {{"exposure_time_normalized", "uniform"}};
    c.noise_sd = 0.5;
    c.calibrate_noise = true;
    c.seed = 42;
    return c;
}

RawTable generate_synthetic(const SynthConfig& cfg) {
    const ModelSpec spec = cfg.model_document.empty() ? builtin_recall_model() : parse_model_spec(cfg.model_document);
    const ValidatedModel model = validate_model(spec);
    if (cfg.studies.empty()) throw DataError("synthetic config has no studies");
    if (!(cfg.noise_sd >= 0.0)) throw DataError("noise_sd must be non-negative");
    for (const auto& s : cfg.studies) {
        if (s.n < 10) throw DataError("study '" + s.label + "' needs n >= 10");
        if (!(s.base_rate > 0.0 && s.base_rate < 1.0)) throw DataError("study '" + s.label + "' base rate must lie in (0, 1)");
        if (s.objects_per_participant < 1) throw DataError("study '" + s.label + "' needs objects_per_participant >= 1");
    }
    for (const auto& p : cfg.true_paths) {
        const auto src = spec.construct_index(p.source);
        const auto tgt = spec.construct_index(p.target);
        if (!src || !tgt) throw DataError("true path " + p.source + " -> " + p.target + " names an unknown construct");
        const auto& preds = model.predecessors[*tgt];
        if (*tgt != model.outcome || std::find(preds.begin(), preds.end(), *src) == preds.end()) {
            throw DataError("true path " + p.source + " -> " + p.target + " is not a path into the outcome");
        }
    }

    std::vector<const IndicatorSpec*> indicators;
    for (const auto& c : spec.constructs) {
        for (const auto& ind : c.indicators) indicators.push_back(&ind);
    }
    const std::string& outcome = model.outcome_indicator();

    std::size_t total = 0;
    for (const auto& s : cfg.studies) total += s.n;

    RawTable table;
    table.header = {"study", "participant", "object"};
    for (const auto* ind : indicators) table.header.push_back(ind->name);
    table.rows.assign(total, std::vector<std::string>(table.header.size()));

    // Encoded values per generating column, used to build composites.
    std::map<std::string, std::vector<double>> encoded;
    std::vector<std::vector<std::size_t>> study_rows(cfg.studies.size());

    Rng rng(cfg.seed);
    std::size_t row = 0;
    for (std::size_t s = 0; s < cfg.studies.size(); ++s) {
        const auto& study = cfg.studies[s];
        for (std::size_t i = 0; i < study.n; ++i, ++row) {
            study_rows[s].push_back(row);
            auto& out = table.rows[row];
            out[0] = study.label;
            out[1] = study.label + "-P" + std::to_string(i / study.objects_per_participant + 1);
            out[2] = "O" + std::to_string(i % study.objects_per_participant + 1);
            for (std::size_t k = 0; k < indicators.size(); ++k) {
                const auto& ind = *indicators[k];
                if (ind.name == outcome) continue;
                const auto fixed = study.constants.find(ind.name);
                std::string value;
                switch (ind.kind) {
                    case IndicatorKind::categorical: {
                        const auto levels = levels_of(ind, cfg);
                        if (fixed != study.constants.end()) {
                            value = fixed->second;
                        } else {
                            std::vector<double> probs(levels.size(), 1.0 / static_cast<double>(levels.size()));
                            if (const auto it = cfg.level_probabilities.find(ind.name); it != cfg.level_probabilities.end()) {
                                for (std::size_t l = 0; l < levels.size(); ++l) {
                                    const auto p = it->second.find(levels[l]);
                                    probs[l] = p == it->second.end() ? 0.0 : p->second;
                                }
                            }
                            const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
                            if (!(sum > 0.0)) throw DataError("level probabilities of '" + ind.name + "' sum to zero");
                            double u = rng.uniform() * sum;
                            std::size_t pick = levels.size() - 1;
                            for (std::size_t l = 0; l < levels.size(); ++l) {
                                if (u < probs[l]) {
                                    pick = l;
                                    break;
                                }
                                u -= probs[l];
                            }
                            value = levels[pick];
                        }
                        if (std::find(levels.begin(), levels.end(), value) == levels.end()) {
                            throw DataError("constant '" + value + "' is not a level of '" + ind.name + "'");
                        }
                        for (std::size_t l = 0; l < levels.size(); ++l) {
                            if (levels[l] == (ind.reference_level ? *ind.reference_level : levels.front())) continue;
                            auto& col = encoded[dummy_column_name(ind.name, levels[l])];
                            col.resize(total);
                            col[row] = value == levels[l] ? 1.0 : 0.0;
                        }
                        break;
                    }
                    case IndicatorKind::boolean: {
                        bool b = false;
                        if (fixed != study.constants.end()) {
                            const auto parsed = parse_boolean(fixed->second);
                            if (!parsed) throw DataError("constant for '" + ind.name + "' is not boolean");
                            b = *parsed;
                        } else {
                            const auto it = cfg.boolean_rates.find(ind.name);
                            b = rng.uniform() < (it == cfg.boolean_rates.end() ? 0.5 : it->second);
                        }
                        value = b ? "true" : "false";
                        auto& col = encoded[ind.name];
                        col.resize(total);
                        col[row] = b ? 1.0 : 0.0;
                        break;
                    }
                    default: {
                        double x = 0.0;
                        if (fixed != study.constants.end()) {
                            const auto parsed = parse_number(fixed->second);
                            if (!parsed) throw DataError("constant for '" + ind.name + "' is not numeric");
                            x = *parsed;
                        } else {
                            const auto it = cfg.distributions.find(ind.name);
                            const std::string dist = it == cfg.distributions.end() ? "normal" : it->second;
                            if (dist == "normal") {
                                x = rng.normal();
                            } else if (dist == "uniform") {
                                x = rng.uniform();
                            } else {
                                throw DataError("unknown distribution '" + dist + "' for '" + ind.name + "'");
                            }
                        }
                        value = format_double(x);
                        auto& col = encoded[ind.name];
                        col.resize(total);
                        col[row] = x;
                        break;
                    }
                }
                out[k + 3] = value;
            }
        }
    }

    // Within-study z-scores; a column constant inside a study contributes 0 there.
    for (auto& [name, col] : encoded) {
        for (const auto& rows : study_rows) {
            const double m = mean_of(col, rows);
            const double sd = std::sqrt(var_of(col, rows));
            for (auto r : rows) col[r] = sd > 0.0 ? (col[r] - m) / sd : 0.0;
        }
    }

    std::vector<double> latent(total, 0.0);
    for (const auto& path : cfg.true_paths) {
        const auto& construct = *spec.find_construct(path.source);
        std::vector<double> composite(total, 0.0);
        std::vector<const std::vector<double>*> members;
        for (const auto& ind : construct.indicators) {
            for (const auto& [name, col] : encoded) {
                const bool mine = name == ind.name ||
                                  (ind.kind == IndicatorKind::categorical && name.rfind(ind.name, 0) == 0 &&
                                   name.size() > ind.name.size());
                if (!mine) continue;
                members.push_back(&col);
                const auto w = cfg.formative_weights.find(name);
                if (w == cfg.formative_weights.end()) continue;
                for (std::size_t r = 0; r < total; ++r) composite[r] += w->second * col[r];
            }
        }
        std::vector<std::size_t> all(total);
        std::iota(all.begin(), all.end(), 0);
        const double sd = std::sqrt(var_of(composite, all));
        if (!(sd > 0.0)) throw DataError("composite '" + path.source + "' is constant; check formative_weights");
        double loading_sum = 0.0;
        for (const auto* col : members) loading_sum += pearson(*col, composite);
        const double scale = (loading_sum < 0.0 ? -1.0 : 1.0) / sd;
        for (std::size_t r = 0; r < total; ++r) latent[r] += path.value * composite[r] * scale;
    }

    const std::size_t outcome_col = table.column(outcome);
    for (std::size_t s = 0; s < cfg.studies.size(); ++s) {
        const auto& study = cfg.studies[s];
        const auto& rows = study_rows[s];
        double sigma = cfg.noise_sd;
        if (cfg.calibrate_noise) {
            // Residual sd that makes the point-biserial attenuation of a normal
            // latent cut at this base rate exactly cancel.
            const boost::math::normal_distribution<double> unit;
            const double pi = study.base_rate;
            const double c = boost::math::pdf(unit, boost::math::quantile(unit, 1.0 - pi)) / std::sqrt(pi * (1.0 - pi));
            sigma = std::sqrt(std::max(0.0, c * c - var_of(latent, rows)));
        }
        std::vector<double> values;
        for (auto r : rows) values.push_back(latent[r] + (sigma > 0.0 ? sigma * rng.normal() : 0.0));

        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(rows.size()) * (1.0 - study.base_rate)));
        const std::size_t cut = binarize_cut(sorted, target);
        if (cut == 0 || cut == sorted.size()) {
            throw DataError("study '" + study.label + "': latent outcome is degenerate, base rate infeasible");
        }
        const double threshold = sorted[cut - 1];
        for (std::size_t i = 0; i < rows.size(); ++i) table.rows[rows[i]][outcome_col] = values[i] > threshold ? "1" : "0";
    }
    return table;
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    auto studies = nlohmann::json::array();
    for (const auto& s : c.studies) {
        studies.push_back({{"label", s.label},
                           {"n", s.n},
                           {"base_rate", s.base_rate},
                           {"objects_per_participant", s.objects_per_participant},
                           {"constants", s.constants}});
    }
    auto paths = nlohmann::json::array();
    for (const auto& p : c.true_paths) paths.push_back({{"source", p.source}, {"target", p.target}, {"value", p.value}});
    j = {{"model_document", c.model_document},
         {"studies", studies},
         {"true_paths", paths},
         {"formative_weights", c.formative_weights},
         {"level_probabilities", c.level_probabilities},
         {"boolean_rates", c.boolean_rates},
         {"distributions", c.distributions},
         {"noise_sd", c.noise_sd},
         {"calibrate_noise", c.calibrate_noise},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    c = {};
    c.model_document = j.value("model_document", std::string());
    for (const auto& s : j.at("studies")) {
        SynthStudy st;
        s.at("label").get_to(st.label);
        s.at("n").get_to(st.n);
        s.at("base_rate").get_to(st.base_rate);
        st.objects_per_participant = s.value("objects_per_participant", std::size_t{1});
        st.constants = s.value("constants", std::map<std::string, std::string>{});
        c.studies.push_back(std::move(st));
    }
    for (const auto& p : j.at("true_paths")) {
        c.true_paths.push_back({p.at("source").get<std::string>(), p.at("target").get<std::string>(), p.at("value").get<double>()});
    }
    j.at("formative_weights").get_to(c.formative_weights);
    c.level_probabilities = j.value("level_probabilities", decltype(c.level_probabilities){});
    c.boolean_rates = j.value("boolean_rates", decltype(c.boolean_rates){});
    c.distributions = j.value("distributions", decltype(c.distributions){});
    c.noise_sd = j.value("noise_sd", 1.0);
    c.calibrate_noise = j.value("calibrate_noise", false);
    c.seed = j.value("seed", std::uint64_t{42});
}

OracleResult small_case_oracle(const EncodedMatrix& m, const ValidatedModel& model) {
    const auto& spec = model.spec;
    const auto column_of = [&](std::size_t construct) {
        const auto& c = spec.constructs[construct];
        if (c.indicators.size() != 1) throw DataError("oracle needs one indicator per construct; '" + c.name + "' has more");
        const auto& name = c.indicators.front().name;
        if (const auto it = m.indicator_columns.find(name); it != m.indicator_columns.end()) {
            if (it->second.size() != 1) throw DataError("oracle needs one encoded column for '" + name + "'");
            return m.column(it->second.front());
        }
        return m.column(name);
    };
    const auto standardize = [](Eigen::VectorXd v) {
        const double n = static_cast<double>(v.size());
        const double mean = v.sum() / n;
        double ss = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) ss += (v(i) - mean) * (v(i) - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        if (!(sd > 0.0)) throw DataError("oracle input has zero variance");
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = (v(i) - mean) / sd;
        return v;
    };

    OracleResult result;
    result.method = "normal-equations-gauss-jordan";
    const Eigen::VectorXd y = standardize(column_of(model.outcome));
    const auto& preds = model.predecessors[model.outcome];
    const std::size_t p = preds.size();
    std::vector<Eigen::VectorXd> xs;
    for (auto c : preds) {
        xs.push_back(standardize(column_of(c)));
        result.predictors.push_back(spec.constructs[c].name);
    }

    // Augmented [X'X | X'y], reduced in place with partial pivoting.
    std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i) s += xs[r](i) * xs[c](i);
            a[r][c] = s;
        }
        double s = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) s += xs[r](i) * y(i);
        a[r][p] = s;
    }
    for (std::size_t col = 0; col < p; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < p; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-12) throw NumericalError("oracle normal equations are singular");
        std::swap(a[col], a[pivot]);
        const double d = a[col][col];
        for (auto& v : a[col]) v /= d;
        for (std::size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
        }
    }
    for (std::size_t r = 0; r < p; ++r) result.coefficients.push_back(a[r][p]);
    return result;
}

}  // namespace pathlens
