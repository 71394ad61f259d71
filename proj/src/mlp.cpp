#include "pathlens/mlp.hpp"

#include <cmath>

#include "pathlens/error.hpp"
#include "pathlens/forest.hpp"
#include "pathlens/random.hpp"

namespace pathlens {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd with_bias(const MatrixXd& x) {
    MatrixXd out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

MatrixXd sigmoid(const MatrixXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

void unpack(const VectorXd& theta, Index p, Index h, MatrixXd& hidden, VectorXd& output) {
    hidden.resize(h, p + 1);
    for (Index r = 0; r < h; ++r) hidden.row(r) = theta.segment(r * (p + 1), p + 1).transpose();
    output = theta.tail(h + 1);
}

VectorXd pack(const MatrixXd& hidden, const VectorXd& output) {
    const Index h = hidden.rows();
    const Index stride = hidden.cols();
    VectorXd theta(h * stride + output.size());
    for (Index r = 0; r < h; ++r) theta.segment(r * stride, stride) = hidden.row(r).transpose();
    theta.tail(output.size()) = output;
    return theta;
}

VectorXd forward(const MatrixXd& hidden, const VectorXd& output, const MatrixXd& xb) {
    const MatrixXd act = sigmoid(xb * hidden.transpose());
    return (act * output.tail(output.size() - 1)).array() + output(0);
}

MatrixXd scaled_inputs(const MlpModel& f, const EncodedMatrix& m) {
    MatrixXd x = feature_block(m, f.columns);
    for (Index j = 0; j < x.cols(); ++j) {
        const auto& s = f.input_scaling[static_cast<std::size_t>(j)];
        x.col(j) = (x.col(j).array() - s.mean) / s.sd;
    }
    return x;
}

}  // namespace

double mlp_objective(const VectorXd& theta, const MatrixXd& x, const VectorXd& y, std::size_t hidden_units,
                     double decay, VectorXd* gradient) {
    const Index p = x.cols();
    const auto h = static_cast<Index>(hidden_units);
    if (theta.size() != static_cast<Index>(mlp_parameter_count(static_cast<std::size_t>(p), hidden_units))) {
        throw DataError("parameter vector has the wrong length");
    }
    MatrixXd hidden;
    VectorXd output;
    unpack(theta, p, h, hidden, output);

    const MatrixXd xb = with_bias(x);
    const MatrixXd act = sigmoid(xb * hidden.transpose());  // n x h
    const VectorXd yhat = (act * output.tail(h)).array() + output(0);
    const VectorXd resid = yhat - y;
    const double loss = resid.squaredNorm() + decay * theta.squaredNorm();

    if (gradient) {
        VectorXd g_out(h + 1);
        g_out(0) = 2.0 * resid.sum();
        g_out.tail(h) = 2.0 * act.transpose() * resid;
        // d/d a = 2 r v_h s(1-s)
        const MatrixXd delta = (2.0 * resid * output.tail(h).transpose()).cwiseProduct(
            act.cwiseProduct((1.0 - act.array()).matrix()));
        const MatrixXd g_hidden = delta.transpose() * xb;  // h x (p+1)
        *gradient = pack(g_hidden, g_out) + 2.0 * decay * theta;
    }
    return loss;
}

MlpModel fit_mlp(const EncodedMatrix& m, std::span<const int> labels, const MlpConfig& cfg) {
    const Index n = m.rows();
    const Index p = m.cols();
    if (n < 1 || p < 1) throw DataError("MLP needs at least one row and one feature");
    if (static_cast<Index>(labels.size()) != n) throw DataError("MLP labels do not match row count");
    if (cfg.hidden_units < 1) throw DataError("hidden_units must be at least 1");
    if (!(cfg.decay >= 0.0)) throw DataError("decay must be non-negative");
    if (cfg.max_iterations < 1) throw DataError("max_iterations must be at least 1");

    MlpModel f;
    f.columns = m.column_names;
    MatrixXd x = m.values;
    for (Index j = 0; j < p; ++j) {
        const double mean = x.col(j).mean();
        double sd = n > 1 ? std::sqrt((x.col(j).array() - mean).square().sum() / static_cast<double>(n - 1)) : 0.0;
        if (!(sd > 0.0)) sd = 1.0;
        f.input_scaling.push_back({mean, sd});
        x.col(j) = (x.col(j).array() - mean) / sd;
    }
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)];

    const auto count = static_cast<Index>(mlp_parameter_count(static_cast<std::size_t>(p), cfg.hidden_units));
    Rng rng(cfg.seed);
    VectorXd theta(count);
    for (Index k = 0; k < count; ++k) theta(k) = rng.uniform(-0.5, 0.5);

    VectorXd grad;
    double loss = mlp_objective(theta, x, y, cfg.hidden_units, cfg.decay, &grad);
    if (!std::isfinite(loss)) throw NumericalError("MLP loss is not finite at iteration 0");
    f.loss_trace.push_back(loss);

    // BFGS on the inverse Hessian; every accepted step strictly lowers the loss.
    MatrixXd inv_h = MatrixXd::Identity(count, count);
    int iteration = 0;
    while (iteration < cfg.max_iterations && grad.norm() >= cfg.gradient_tolerance) {
        VectorXd dir = -inv_h * grad;
        double slope = grad.dot(dir);
        if (!(slope < 0.0)) {
            inv_h.setIdentity();
            dir = -grad;
            slope = -grad.squaredNorm();
        }
        bool accepted = false;
        VectorXd next, next_grad;
        double next_loss = 0.0;
        for (int restart = 0; restart < 2 && !accepted; ++restart) {
            double step = 1.0;
            for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
                next = theta + step * dir;
                next_loss = mlp_objective(next, x, y, cfg.hidden_units, cfg.decay, &next_grad);
                if (std::isfinite(next_loss) && next_loss <= loss + 1e-4 * step * slope && next_loss < loss) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                // Quasi-Newton direction failed; retry once along the gradient.
                inv_h.setIdentity();
                dir = -grad;
                slope = -grad.squaredNorm();
            }
        }
        if (!accepted) break;
        ++iteration;
        if (!std::isfinite(next_loss)) {
            throw NumericalError("MLP loss is not finite at iteration " + std::to_string(iteration));
        }

        const VectorXd s = next - theta;
        const VectorXd yk = next_grad - grad;
        const double sy = s.dot(yk);
        if (sy > 1e-12 * s.norm() * yk.norm()) {
            const double rho = 1.0 / sy;
            const VectorXd hy = inv_h * yk;
            inv_h += ((sy + yk.dot(hy)) * rho * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }
        theta = next;
        grad = next_grad;
        loss = next_loss;
        f.loss_trace.push_back(loss);
    }
    f.iterations = iteration;
    unpack(theta, p, static_cast<Index>(cfg.hidden_units), f.hidden, f.output);
    return f;
}

PredictionSet predict_mlp(const MlpModel& f, const EncodedMatrix& m, double threshold) {
    const MatrixXd x = scaled_inputs(f, m);
    const VectorXd raw = forward(f.hidden, f.output, with_bias(x));
    PredictionSet out;
    for (Index i = 0; i < raw.size(); ++i) {
        Prediction p;
        p.row = static_cast<std::size_t>(i);
        p.value = raw(i);
        p.probability = clamp_probability(raw(i));
        p.label = threshold_label(raw(i), threshold);
        out.rows.push_back(p);
    }
    return out;
}

void to_json(nlohmann::json& j, const MlpModel& f) {
    std::vector<std::vector<double>> hidden;
    for (Index r = 0; r < f.hidden.rows(); ++r) {
        auto& row = hidden.emplace_back();
        for (Index c = 0; c < f.hidden.cols(); ++c) row.push_back(f.hidden(r, c));
    }
    auto scaling = nlohmann::json::array();
    for (const auto& s : f.input_scaling) scaling.push_back({{"mean", s.mean}, {"sd", s.sd}});
    j = {{"columns", f.columns},
         {"input_scaling", scaling},
         {"hidden_shape", {f.hidden.rows(), f.hidden.cols()}},
         {"hidden", hidden},
         {"output", std::vector<double>(f.output.data(), f.output.data() + f.output.size())},
         {"iterations", f.iterations},
         {"final_loss", f.loss_trace.empty() ? 0.0 : f.loss_trace.back()}};
}

void from_json(const nlohmann::json& j, MlpModel& f) {
    f = {};
    j.at("columns").get_to(f.columns);
    for (const auto& s : j.at("input_scaling")) f.input_scaling.push_back({s.at("mean").get<double>(), s.at("sd").get<double>()});
    const auto hidden = j.at("hidden").get<std::vector<std::vector<double>>>();
    const auto cols = hidden.empty() ? Index{0} : static_cast<Index>(hidden.front().size());
    f.hidden.resize(static_cast<Index>(hidden.size()), cols);
    for (std::size_t r = 0; r < hidden.size(); ++r) {
        for (Index c = 0; c < cols; ++c) f.hidden(static_cast<Index>(r), c) = hidden[r].at(static_cast<std::size_t>(c));
    }
    const auto output = j.at("output").get<std::vector<double>>();
    f.output = Eigen::Map<const VectorXd>(output.data(), static_cast<Index>(output.size()));
    j.at("iterations").get_to(f.iterations);
}

}  // namespace pathlens
