#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pathlens/dataset.hpp"
#include "pathlens/prediction.hpp"

namespace pathlens {

struct MlpConfig {
    std::size_t hidden_units = 10;
    /// L2 coefficient on every parameter, biases included.
    double decay = 0.1;
    int max_iterations = 1000;
    double gradient_tolerance = 1e-8;
    std::uint64_t seed = 42;
};

/// Sigmoid hidden layer, identity output. Row h of `hidden` is
/// [bias, w_1..w_p] for hidden unit h; `output` is [bias, v_1..v_H].
struct MlpModel {
    std::vector<std::string> columns;
    std::vector<ColumnStats> input_scaling;  // applied before the network
    Eigen::MatrixXd hidden;
    Eigen::VectorXd output;
    int iterations = 0;
    std::vector<double> loss_trace;  // loss after each accepted step, starting at the initial loss

    std::size_t inputs() const { return static_cast<std::size_t>(hidden.cols()) - 1; }
    std::size_t hidden_units() const { return static_cast<std::size_t>(hidden.rows()); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(hidden.size() + output.size()); }
};

inline std::size_t mlp_parameter_count(std::size_t p, std::size_t hidden_units) {
    return (p + 1) * hidden_units + hidden_units + 1;
}

/// SSE + decay * |theta|^2 for the flattened parameters (hidden rows first,
/// then output). Writes the analytic gradient when `gradient` is non-null.
double mlp_objective(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     std::size_t hidden_units, double decay, Eigen::VectorXd* gradient = nullptr);

/// Standardizes inputs with the training mean/sd (sd 0 -> 1), then minimizes
/// the penalized SSE with BFGS and step-halving backtracking.
MlpModel fit_mlp(const EncodedMatrix& m, std::span<const int> labels, const MlpConfig& cfg = {});

/// Raw network output per row; probability clamps it, label thresholds it.
PredictionSet predict_mlp(const MlpModel& f, const EncodedMatrix& m, double threshold = kDefaultThreshold);

void to_json(nlohmann::json& j, const MlpModel& f);
void from_json(const nlohmann::json& j, MlpModel& f);

}  // namespace pathlens
