#include "pathlens/pls.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pathlens/error.hpp"
#include "pathlens/parallel.hpp"
#include "pathlens/random.hpp"

namespace pathlens {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double sample_sd(const VectorXd& v) {
    if (v.size() < 2) return 0.0;
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

double correlation(const VectorXd& a, const VectorXd& b) {
    const VectorXd ca = a.array() - a.mean();
    const VectorXd cb = b.array() - b.mean();
    const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
    return denom > 0.0 ? ca.dot(cb) / denom : 0.0;
}

MatrixXd center_columns(const MatrixXd& x) { return x.rowwise() - x.colwise().mean(); }

/// Least squares via column-pivoted Householder QR; rank deficiency is an error.
VectorXd least_squares(const MatrixXd& x, const VectorXd& y, const std::string& what) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < x.cols()) throw NumericalError("singular regression in " + what + " (collinear columns)");
    return qr.solve(y);
}

struct Block {
    std::string name;
    MeasurementMode mode = MeasurementMode::formative;
    std::vector<std::string> columns;
    MatrixXd x;         // standardized indicator block
    MatrixXd centered;  // x with column means removed
};

struct PathModel {
    std::vector<Block> blocks;  // topological order
    std::vector<std::vector<std::size_t>> pred;
    std::vector<std::vector<std::size_t>> succ;
    std::vector<std::pair<std::size_t, std::size_t>> paths;  // declaration order
    std::size_t outcome = 0;
    std::vector<std::string> pruned;
};

/// Maps spec constructs onto the matrix columns. Constructs left without
/// columns (auto-dropped) or without paths are pruned.
PathModel resolve(const EncodedMatrix& m, const ValidatedModel& model) {
    const auto& spec = model.spec;
    const std::size_t count = spec.constructs.size();
    std::vector<std::vector<std::string>> columns(count);
    for (std::size_t c = 0; c < count; ++c) {
        for (const auto& ind : spec.constructs[c].indicators) {
            const auto it = m.indicator_columns.find(ind.name);
            if (it == m.indicator_columns.end()) {
                if (!m.find_column(ind.name)) throw DataError("indicator '" + ind.name + "' not present in data");
                columns[c].push_back(ind.name);
                continue;
            }
            for (const auto& col : it->second) {
                if (!m.find_column(col)) throw DataError("column '" + col + "' not present in data");
                columns[c].push_back(col);
            }
        }
    }

    std::vector<bool> alive(count);
    for (std::size_t c = 0; c < count; ++c) alive[c] = !columns[c].empty();
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& p : spec.paths) edges.emplace_back(*spec.construct_index(p.source), *spec.construct_index(p.target));
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t c = 0; c < count; ++c) {
            if (!alive[c]) continue;
            const bool connected = std::any_of(edges.begin(), edges.end(), [&](const auto& e) {
                return alive[e.first] && alive[e.second] && (e.first == c || e.second == c);
            });
            if (!connected) {
                alive[c] = false;
                changed = true;
            }
        }
    }

    const auto& outcome_name = spec.constructs[model.outcome].name;
    if (!alive[model.outcome]) throw DataError("outcome construct '" + outcome_name + "' has no usable indicators or predecessors");

    PathModel pm;
    std::vector<std::size_t> block_of(count, static_cast<std::size_t>(-1));
    for (auto c : model.order) {
        if (!alive[c]) {
            pm.pruned.push_back(spec.constructs[c].name);
            continue;
        }
        block_of[c] = pm.blocks.size();
        Block b;
        b.name = spec.constructs[c].name;
        b.mode = spec.constructs[c].mode;
        b.columns = columns[c];
        b.x.resize(m.rows(), static_cast<Index>(b.columns.size()));
        for (std::size_t k = 0; k < b.columns.size(); ++k) {
            b.x.col(static_cast<Index>(k)) = m.values.col(static_cast<Index>(m.column_index(b.columns[k])));
        }
        b.centered = center_columns(b.x);
        pm.blocks.push_back(std::move(b));
    }
    pm.pred.assign(pm.blocks.size(), {});
    pm.succ.assign(pm.blocks.size(), {});
    for (const auto& [from, to] : edges) {
        if (!alive[from] || !alive[to]) continue;
        pm.pred[block_of[to]].push_back(block_of[from]);
        pm.succ[block_of[from]].push_back(block_of[to]);
        pm.paths.emplace_back(block_of[from], block_of[to]);
    }
    pm.outcome = block_of[model.outcome];
    return pm;
}

/// Scales weights so the block score has unit sample variance; returns the centered score.
VectorXd normalize(const Block& b, VectorXd& w) {
    VectorXd score = b.centered * w;
    const double sd = sample_sd(score);
    if (!(sd > 0.0) || !std::isfinite(sd)) throw NumericalError("construct '" + b.name + "' has a degenerate score");
    w /= sd;
    return score / sd;
}

MatrixXd columns_of(const MatrixXd& z, const std::vector<std::size_t>& idx) {
    MatrixXd out(z.rows(), static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Index>(i)) = z.col(static_cast<Index>(idx[i]));
    return out;
}

FittedPls estimate(const PathModel& pm, const PlsOptions& options) {
    const std::size_t count = pm.blocks.size();
    const Index n = pm.blocks.front().x.rows();
    std::size_t total_columns = 0;
    for (const auto& b : pm.blocks) total_columns += b.columns.size();
    if (static_cast<std::size_t>(n) <= total_columns) {
        throw DataError("need more rows (" + std::to_string(n) + ") than indicator columns (" +
                        std::to_string(total_columns) + ")");
    }

    // Formative blocks regress the proxy on a fixed design; factor it once.
    std::vector<std::optional<Eigen::ColPivHouseholderQR<MatrixXd>>> designs(count);
    for (std::size_t j = 0; j < count; ++j) {
        const auto& b = pm.blocks[j];
        for (Index k = 0; k < b.x.cols(); ++k) {
            if (b.x.col(k).maxCoeff() == b.x.col(k).minCoeff()) {
                throw DataError("zero-variance indicator '" + b.columns[static_cast<std::size_t>(k)] + "' in construct '" +
                                b.name + "'");
            }
        }
        if (b.mode == MeasurementMode::formative) {
            designs[j].emplace(b.centered);
            designs[j]->setThreshold(1e-10);
            if (designs[j]->rank() < b.centered.cols()) {
                throw NumericalError("singular regression in formative block '" + b.name + "' (collinear indicators)");
            }
        }
    }

    std::vector<VectorXd> weights(count);
    MatrixXd scores(n, static_cast<Index>(count));
    for (std::size_t j = 0; j < count; ++j) {
        weights[j] = VectorXd::Ones(pm.blocks[j].x.cols());
        scores.col(static_cast<Index>(j)) = normalize(pm.blocks[j], weights[j]);
    }

    FittedPls fit;
    double delta = 0.0;
    int iteration = 0;
    bool converged = false;
    while (iteration < options.max_iterations) {
        ++iteration;
        // Inner step, path weighting: predecessors enter with the coefficients
        // of regressing z_j on them, successors with cor(z_j, z_s).
        MatrixXd proxies = MatrixXd::Zero(n, static_cast<Index>(count));
        for (std::size_t j = 0; j < count; ++j) {
            auto proxy = proxies.col(static_cast<Index>(j));
            const VectorXd zj = scores.col(static_cast<Index>(j));
            if (!pm.pred[j].empty()) {
                const MatrixXd zp = columns_of(scores, pm.pred[j]);
                proxy += zp * least_squares(zp, zj, "inner model of '" + pm.blocks[j].name + "'");
            }
            for (auto s : pm.succ[j]) {
                const VectorXd zs = scores.col(static_cast<Index>(s));
                proxy += correlation(zj, zs) * zs;
            }
        }

        // Outer step: mode A correlation weights, mode B regression weights.
        delta = 0.0;
        std::vector<VectorXd> updated(count);
        MatrixXd next_scores(n, static_cast<Index>(count));
        for (std::size_t j = 0; j < count; ++j) {
            const auto& b = pm.blocks[j];
            const VectorXd proxy = proxies.col(static_cast<Index>(j));
            VectorXd w(b.x.cols());
            if (b.mode == MeasurementMode::reflective) {
                for (Index k = 0; k < b.x.cols(); ++k) w(k) = correlation(b.x.col(k), proxy);
            } else {
                w = designs[j]->solve(VectorXd(proxy.array() - proxy.mean()));
            }
            next_scores.col(static_cast<Index>(j)) = normalize(b, w);
            delta = std::max(delta, (w - weights[j]).cwiseAbs().maxCoeff());
            updated[j] = std::move(w);
        }
        weights = std::move(updated);
        scores = std::move(next_scores);
        if (!std::isfinite(delta)) throw NumericalError("PLS weights diverged at iteration " + std::to_string(iteration));
        if (delta < options.tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged && options.require_convergence) {
        throw NumericalError("PLS did not converge within " + std::to_string(options.max_iterations) +
                             " iterations (max weight change " + std::to_string(delta) + ")");
    }

    // Orientation: each construct's loadings sum to a non-negative value.
    for (std::size_t j = 0; j < count; ++j) {
        const auto& b = pm.blocks[j];
        double sum = 0.0;
        for (Index k = 0; k < b.x.cols(); ++k) sum += correlation(b.x.col(k), scores.col(static_cast<Index>(j)));
        if (sum < 0.0 || (sum == 0.0 && weights[j](0) < 0.0)) {
            weights[j] = -weights[j];
            scores.col(static_cast<Index>(j)) = -scores.col(static_cast<Index>(j));
        }
    }

    fit.iterations = iteration;
    fit.converged = converged;
    fit.max_weight_delta = delta;
    fit.construct_scores = scores;
    fit.outcome = pm.outcome;
    for (std::size_t j = 0; j < count; ++j) {
        const auto& b = pm.blocks[j];
        ConstructFit cf;
        cf.name = b.name;
        cf.mode = b.mode;
        cf.columns = b.columns;
        cf.weights = weights[j];
        cf.score_offset = (b.x * weights[j]).mean();
        cf.loadings.resize(b.x.cols());
        for (Index k = 0; k < b.x.cols(); ++k) cf.loadings(k) = correlation(b.x.col(k), scores.col(static_cast<Index>(j)));
        fit.constructs.push_back(std::move(cf));
    }

    std::vector<VectorXd> betas(count);
    for (std::size_t j = 0; j < count; ++j) {
        if (pm.pred[j].empty()) continue;
        const MatrixXd zp = columns_of(scores, pm.pred[j]);
        const VectorXd zj = scores.col(static_cast<Index>(j));
        betas[j] = least_squares(zp, zj, "structural model of '" + pm.blocks[j].name + "'");
        const double rss = (zj - zp * betas[j]).squaredNorm();
        const double tss = (zj.array() - zj.mean()).square().sum();
        fit.r_squared[pm.blocks[j].name] = std::clamp(1.0 - rss / tss, 0.0, 1.0);
    }
    for (const auto& [from, to] : pm.paths) {
        const auto& preds = pm.pred[to];
        const auto pos = static_cast<Index>(std::find(preds.begin(), preds.end(), from) - preds.begin());
        fit.paths.push_back({pm.blocks[from].name, pm.blocks[to].name, betas[to](pos)});
    }
    return fit;
}

}  // namespace

const ConstructFit& FittedPls::construct(std::string_view name) const {
    for (const auto& c : constructs) {
        if (c.name == name) return c;
    }
    throw DataError("construct '" + std::string(name) + "' not in fitted model");
}

double FittedPls::path_coefficient(std::string_view source, std::string_view target) const {
    for (const auto& p : paths) {
        if (p.source == source && p.target == target) return p.coefficient;
    }
    throw DataError("path " + std::string(source) + " -> " + std::string(target) + " not in fitted model");
}

double FittedPls::weight(std::string_view column) const {
    for (const auto& c : constructs) {
        for (std::size_t k = 0; k < c.columns.size(); ++k) {
            if (c.columns[k] == column) return c.weights(static_cast<Index>(k));
        }
    }
    throw DataError("column '" + std::string(column) + "' not in fitted model");
}

double FittedPls::loading(std::string_view column) const {
    for (const auto& c : constructs) {
        for (std::size_t k = 0; k < c.columns.size(); ++k) {
            if (c.columns[k] == column) return c.loadings(static_cast<Index>(k));
        }
    }
    throw DataError("column '" + std::string(column) + "' not in fitted model");
}

FittedPls fit_pls(const EncodedMatrix& standardized, const ValidatedModel& model, const PlsOptions& options) {
    const PathModel pm = resolve(standardized, model);
    FittedPls fit = estimate(pm, options);
    fit.diagnostics.pruned_constructs = pm.pruned;
    fit.model_document = serialize_model_spec(model.spec);
    fit.encoding = standardized.encoding;
    fit.indicator_columns = standardized.indicator_columns;
    return fit;
}

FittedPls train_pls(const EncodedMatrix& raw, const ValidatedModel& model, const TrainOptions& options) {
    const std::string& outcome_column = model.outcome_indicator();
    if (!raw.find_column(outcome_column)) throw DataError("outcome column '" + outcome_column + "' not present");

    StandardizedData data = standardize_within_group(raw, options.standardize);
    if (std::find(data.params.dropped_columns.begin(), data.params.dropped_columns.end(), outcome_column) !=
        data.params.dropped_columns.end()) {
        throw DataError("outcome column '" + outcome_column + "' has zero variance");
    }

    FittedPls fit = fit_pls(data.matrix, model, options.pls);
    fit.standardization = data.params;
    fit.diagnostics.dropped_columns = data.params.dropped_columns;
    for (const auto& col : data.params.dropped_columns) {
        fit.diagnostics.warnings.push_back("dropped zero-variance column '" + col + "'");
    }
    for (const auto& name : fit.diagnostics.pruned_constructs) {
        fit.diagnostics.warnings.push_back("pruned construct '" + name + "' (no usable indicators or paths)");
    }
    const auto& params = fit.standardization;
    for (const auto& [group, stats] : params.groups) {
        for (std::size_t j = 0; j < stats.size(); ++j) {
            if (stats[j].pooled_fallback) fit.diagnostics.pooled_fallbacks.push_back({group, params.columns[j]});
        }
    }
    const auto outcome_pos = *params.column_position(outcome_column);
    for (const auto& [group, stats] : params.groups) {
        fit.outcome_destandardization[group] = {stats[outcome_pos].mean, stats[outcome_pos].sd};
    }
    return fit;
}

PredictionSet predict_pls(const FittedPls& fit, const EncodedMatrix& raw, double threshold) {
    if (fit.standardization.empty()) throw DataError("fitted model has no standardization parameters");
    const auto& outcome = fit.outcome_construct();
    const std::string& outcome_column = outcome.columns.front();
    const EncodedMatrix z = apply_standardization(raw, fit.standardization);

    const Index n = raw.rows();
    VectorXd predicted = VectorXd::Zero(n);
    for (const auto& p : fit.paths) {
        if (p.target != outcome.name) continue;
        const auto& c = fit.construct(p.source);
        VectorXd score = VectorXd::Constant(n, -c.score_offset);
        for (std::size_t k = 0; k < c.columns.size(); ++k) {
            const auto col = z.find_column(c.columns[k]);
            if (!col) throw DataError("column mismatch: '" + c.columns[k] + "' missing from scoring data");
            score += c.weights(static_cast<Index>(k)) * z.values.col(static_cast<Index>(*col));
        }
        predicted += p.coefficient * score;
    }

    const double outcome_weight = outcome.weights(0);
    const auto outcome_pos = *fit.standardization.column_position(outcome_column);
    const auto truth_col = raw.find_column(outcome_column);

    PredictionSet out;
    out.rows.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const auto& meta = raw.row_meta[static_cast<std::size_t>(i)];
        const auto group = group_key(meta, fit.standardization.group_column);
        ColumnStats stats;
        if (const auto it = fit.outcome_destandardization.find(group); it != fit.outcome_destandardization.end()) {
            stats = it->second;
        } else {
            const auto s = fit.standardization.stats_for(group, outcome_pos);
            stats = {s.mean, s.sd};
        }
        // Invert the outcome score map z = w * x_std - offset, then destandardize.
        const double standardized = (predicted(i) + outcome.score_offset) / outcome_weight;
        Prediction p;
        p.row = static_cast<std::size_t>(i);
        p.value = stats.mean + stats.sd * standardized;
        p.probability = clamp_probability(p.value);
        p.label = threshold_label(p.value, threshold);
        if (truth_col) p.truth = static_cast<int>(raw.values(i, static_cast<Index>(*truth_col)));
        out.rows.push_back(p);
    }
    return out;
}

double sample_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_paths(const EncodedMatrix& raw, const ValidatedModel& model, const BootstrapOptions& options) {
    if (options.replicates < 1) throw DataError("bootstrap needs at least one replicate");
    if (options.max_attempts < 1) throw DataError("bootstrap needs at least one attempt per replicate");
    const FittedPls full = train_pls(raw, model, options.train);
    const auto n = static_cast<std::size_t>(raw.rows());

    std::vector<std::vector<double>> draws(options.replicates);
    std::vector<std::size_t> retries(options.replicates, 0);

    parallel_for(options.replicates, [&](std::size_t r) {
        std::string last_error;
        for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
            Rng rng = Rng::substream(options.seed, r, attempt);
            std::vector<std::size_t> rows(n);
            for (auto& row : rows) row = static_cast<std::size_t>(rng.index(n));
            try {
                const FittedPls rep = train_pls(raw.select_rows(rows), model, options.train);
                if (rep.paths.size() != full.paths.size()) {
                    last_error = "resample pruned a construct";
                    continue;
                }
                std::map<std::string, double> sign;
                bool compatible = true;
                for (const auto& c : full.constructs) {
                    const auto it = std::find_if(rep.constructs.begin(), rep.constructs.end(),
                                                 [&](const ConstructFit& x) { return x.name == c.name; });
                    if (it == rep.constructs.end() || it->columns != c.columns) {
                        compatible = false;
                        break;
                    }
                    sign[c.name] = it->weights.dot(c.weights) < 0.0 ? -1.0 : 1.0;
                }
                if (!compatible) {
                    last_error = "resample dropped an indicator column";
                    continue;
                }
                std::vector<double> betas;
                for (const auto& p : full.paths) {
                    betas.push_back(sign[p.source] * sign[p.target] * rep.path_coefficient(p.source, p.target));
                }
                draws[r] = std::move(betas);
                retries[r] = attempt;
                return;
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        throw NumericalError("bootstrap replicate " + std::to_string(r) + " failed after " +
                             std::to_string(options.max_attempts) + " resamples: " + last_error);
    });

    BootstrapResult result;
    result.retries = std::accumulate(retries.begin(), retries.end(), std::size_t{0});
    const double alpha = 1.0 - options.level;
    for (std::size_t p = 0; p < full.paths.size(); ++p) {
        std::vector<double> values;
        values.reserve(options.replicates);
        for (const auto& d : draws) values.push_back(d[p]);
        PathInterval interval;
        interval.path = {full.paths[p].source, full.paths[p].target};
        interval.point = full.paths[p].coefficient;
        interval.lower = sample_quantile(values, alpha / 2.0);
        interval.upper = sample_quantile(values, 1.0 - alpha / 2.0);
        interval.replicates = options.replicates;
        result.intervals.push_back(interval);
    }
    return result;
}

LeverReport sensitivity_levers(const FittedPls& fit, const EncodedMatrix& base_row, double delta,
                               std::span<const std::string> only) {
    if (base_row.rows() != 1) throw DataError("sensitivity analysis needs exactly one base row");

    std::set<std::string> wanted;
    for (const auto& name : only) {
        if (const auto it = fit.indicator_columns.find(name); it != fit.indicator_columns.end()) {
            wanted.insert(it->second.begin(), it->second.end());
            continue;
        }
        bool found = false;
        for (const auto& c : fit.constructs) {
            found = found || std::find(c.columns.begin(), c.columns.end(), name) != c.columns.end();
        }
        if (!found) throw DataError("indicator '" + name + "' not in model");
        wanted.insert(name);
    }

    const PredictionSet base = predict_pls(fit, base_row);
    LeverReport report;
    report.value = base.rows.front().value;
    report.probability = base.rows.front().probability;
    report.label = base.rows.front().label;
    report.delta = delta;
    report.group = group_key(base_row.row_meta.front(), fit.standardization.group_column);

    const auto& outcome = fit.outcome_construct();
    const auto outcome_pos = *fit.standardization.column_position(outcome.columns.front());
    double outcome_sd = 0.0;
    if (const auto it = fit.outcome_destandardization.find(report.group); it != fit.outcome_destandardization.end()) {
        outcome_sd = it->second.sd;
    } else {
        outcome_sd = fit.standardization.stats_for(report.group, outcome_pos).sd;
    }
    const double scale = outcome_sd / outcome.weights(0);

    for (const auto& c : fit.constructs) {
        if (c.name == outcome.name) continue;
        double beta = 0.0;
        for (const auto& p : fit.paths) {
            if (p.source == c.name && p.target == outcome.name) beta = p.coefficient;
        }
        for (std::size_t k = 0; k < c.columns.size(); ++k) {
            if (!wanted.empty() && !wanted.count(c.columns[k])) continue;
            const double w = c.weights(static_cast<Index>(k));
            report.effects.push_back({c.name, c.columns[k], w, beta, delta * w * beta * scale});
        }
    }
    std::stable_sort(report.effects.begin(), report.effects.end(),
                     [](const LeverEffect& a, const LeverEffect& b) { return std::abs(a.effect) > std::abs(b.effect); });
    return report;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::vector<double> to_vector(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_vector(const std::vector<double>& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

void to_json(nlohmann::json& j, const StandardizationParams& p) {
    j = nlohmann::json::object();
    j["group_column"] = p.group_column;
    j["columns"] = p.columns;
    j["dropped_columns"] = p.dropped_columns;
    auto& pooled = j["pooled"] = nlohmann::json::object();
    for (std::size_t c = 0; c < p.columns.size(); ++c) {
        pooled[p.columns[c]] = {{"mean", p.pooled[c].mean}, {"sd", p.pooled[c].sd}};
    }
    auto& groups = j["groups"] = nlohmann::json::object();
    for (const auto& [group, stats] : p.groups) {
        auto& g = groups[group] = nlohmann::json::object();
        for (std::size_t c = 0; c < p.columns.size(); ++c) {
            g[p.columns[c]] = {{"mean", stats[c].mean}, {"sd", stats[c].sd}, {"pooled_fallback", stats[c].pooled_fallback}};
        }
    }
}

void from_json(const nlohmann::json& j, StandardizationParams& p) {
    p = {};
    j.at("group_column").get_to(p.group_column);
    j.at("columns").get_to(p.columns);
    j.at("dropped_columns").get_to(p.dropped_columns);
    for (const auto& col : p.columns) {
        const auto& s = j.at("pooled").at(col);
        p.pooled.push_back({s.at("mean").get<double>(), s.at("sd").get<double>()});
    }
    for (const auto& [group, g] : j.at("groups").items()) {
        auto& stats = p.groups[group];
        for (const auto& col : p.columns) {
            const auto& s = g.at(col);
            stats.push_back({s.at("mean").get<double>(), s.at("sd").get<double>(), s.at("pooled_fallback").get<bool>()});
        }
    }
}

void to_json(nlohmann::json& j, const FittedPls& f) {
    j = nlohmann::json::object();
    auto& constructs = j["constructs"] = nlohmann::json::array();
    auto& weights = j["outer_weights"] = nlohmann::json::object();
    auto& loadings = j["loadings"] = nlohmann::json::object();
    for (const auto& c : f.constructs) {
        constructs.push_back({{"name", c.name},
                              {"mode", to_string(c.mode)},
                              {"columns", c.columns},
                              {"score_offset", c.score_offset}});
        auto& w = weights[c.name] = nlohmann::json::object();
        for (std::size_t k = 0; k < c.columns.size(); ++k) {
            w[c.columns[k]] = c.weights(static_cast<Index>(k));
            loadings[c.columns[k]] = c.loadings(static_cast<Index>(k));
        }
    }
    j["outcome"] = f.outcome_construct().name;
    auto& paths = j["path_coefficients"] = nlohmann::json::array();
    for (const auto& p : f.paths) paths.push_back({{"source", p.source}, {"target", p.target}, {"coefficient", p.coefficient}});
    j["r_squared"] = f.r_squared;
    auto& scores = j["construct_scores"] = nlohmann::json::object();
    std::vector<std::string> names;
    for (const auto& c : f.constructs) names.push_back(c.name);
    scores["columns"] = names;
    auto& rows = scores["values"] = nlohmann::json::array();
    for (Index i = 0; i < f.construct_scores.rows(); ++i) rows.push_back(to_vector(f.construct_scores.row(i).transpose()));
    j["standardization"] = f.standardization;
    auto& dest = j["outcome_destandardization"] = nlohmann::json::object();
    for (const auto& [group, s] : f.outcome_destandardization) dest[group] = {{"mean", s.mean}, {"sd", s.sd}};
    j["iterations"] = f.iterations;
    j["converged"] = f.converged;
    j["max_weight_delta"] = f.max_weight_delta;
    auto fallbacks = nlohmann::json::array();
    for (const auto& fb : f.diagnostics.pooled_fallbacks) fallbacks.push_back({{"group", fb.group}, {"column", fb.column}});
    j["diagnostics"] = {{"dropped_columns", f.diagnostics.dropped_columns},
                        {"pruned_constructs", f.diagnostics.pruned_constructs},
                        {"pooled_fallbacks", fallbacks},
                        {"warnings", f.diagnostics.warnings}};
    j["model_document"] = f.model_document;
    j["encoding"] = f.encoding;
    j["indicator_columns"] = f.indicator_columns;
}

void from_json(const nlohmann::json& j, FittedPls& f) {
    f = {};
    const auto& weights = j.at("outer_weights");
    const auto& loadings = j.at("loadings");
    const std::string outcome = j.at("outcome").get<std::string>();
    for (const auto& c : j.at("constructs")) {
        ConstructFit cf;
        c.at("name").get_to(cf.name);
        cf.mode = c.at("mode").get<std::string>() == "formative" ? MeasurementMode::formative : MeasurementMode::reflective;
        c.at("columns").get_to(cf.columns);
        c.at("score_offset").get_to(cf.score_offset);
        std::vector<double> w, l;
        for (const auto& col : cf.columns) {
            w.push_back(weights.at(cf.name).at(col).get<double>());
            l.push_back(loadings.at(col).get<double>());
        }
        cf.weights = from_vector(w);
        cf.loadings = from_vector(l);
        if (cf.name == outcome) f.outcome = f.constructs.size();
        f.constructs.push_back(std::move(cf));
    }
    for (const auto& p : j.at("path_coefficients")) {
        f.paths.push_back({p.at("source").get<std::string>(), p.at("target").get<std::string>(),
                           p.at("coefficient").get<double>()});
    }
    j.at("r_squared").get_to(f.r_squared);
    const auto& rows = j.at("construct_scores").at("values");
    f.construct_scores.resize(static_cast<Index>(rows.size()), static_cast<Index>(f.constructs.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < f.constructs.size(); ++c) {
            f.construct_scores(static_cast<Index>(i), static_cast<Index>(c)) = rows[i].at(c).get<double>();
        }
    }
    j.at("standardization").get_to(f.standardization);
    for (const auto& [group, s] : j.at("outcome_destandardization").items()) {
        f.outcome_destandardization[group] = {s.at("mean").get<double>(), s.at("sd").get<double>()};
    }
    j.at("iterations").get_to(f.iterations);
    j.at("converged").get_to(f.converged);
    j.at("max_weight_delta").get_to(f.max_weight_delta);
    const auto& d = j.at("diagnostics");
    d.at("dropped_columns").get_to(f.diagnostics.dropped_columns);
    d.at("pruned_constructs").get_to(f.diagnostics.pruned_constructs);
    d.at("warnings").get_to(f.diagnostics.warnings);
    for (const auto& fb : d.at("pooled_fallbacks")) {
        f.diagnostics.pooled_fallbacks.push_back({fb.at("group").get<std::string>(), fb.at("column").get<std::string>()});
    }
    j.at("model_document").get_to(f.model_document);
    j.at("encoding").get_to(f.encoding);
    j.at("indicator_columns").get_to(f.indicator_columns);
}

void to_json(nlohmann::json& j, const PathInterval& p) {
    j = {{"source", p.path.source},
         {"target", p.path.target},
         {"point", p.point},
         {"lower", p.lower},
         {"upper", p.upper},
         {"replicates", p.replicates}};
}

void to_json(nlohmann::json& j, const LeverReport& r) {
    auto effects = nlohmann::json::array();
    for (const auto& e : r.effects) {
        effects.push_back({{"construct", e.construct},
                           {"column", e.column},
                           {"weight", e.weight},
                           {"path_coefficient", e.path_coefficient},
                           {"effect", e.effect}});
    }
    j = {{"value", r.value},
         {"probability", r.probability},
         {"label", r.label},
         {"delta", r.delta},
         {"group", r.group},
         {"effects", effects}};
}

}  // namespace pathlens
