#pragma once

#include "leakwatch/panel.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace leakwatch {

enum class DemandKind { known, unknown };

// Per-sensor coefficients of the pairwise linear pressure model
//   k0_i + k1_i*P_i + sum_d kd_{d,i}*Q_d^2  ==  same expression at j
// under the gauge k0[r] = 0, k1[r] = 1, kd[d][r] = 0 at the reference sensor.
// The gauge removes the global scale, the global intercept shift and the
// per-channel kd shift, none of which are identifiable from pairwise data.
struct CoefficientSet {
    std::vector<std::string> sensor_ids;
    Eigen::VectorXd k0; // meters head
    Eigen::VectorXd k1; // dimensionless
    Eigen::MatrixXd kd; // D x N, head/(m^3/h)^2
    std::vector<std::string> demand_ids;
    std::vector<DemandKind> demand_kinds;
    Eigen::Index gauge_sensor = 0;
    double training_residual_rms = 0.0;

    Eigen::Index sensor_count() const { return k1.size(); }
    Eigen::Index demand_count() const { return kd.rows(); }
    std::vector<Eigen::Index> demand_indices(DemandKind kind) const;

    std::string to_json() const;
    static CoefficientSet from_json(const std::string& text);
};

struct CoefficientLabel {
    enum class Kind { intercept, slope, demand };
    Kind kind;
    Eigen::Index sensor;
    Eigen::Index demand = -1;

    std::string name(const CoefficientSet& coeffs) const;
    std::string name(const std::vector<std::string>& sensor_ids,
                     const std::vector<std::string>& demand_ids) const;
};

// One equation per unordered sensor pair (i<j) per timestep, over the stacked
// coefficient vector with the k0/k1 gauge columns eliminated (their known
// values moved to the right-hand side). (2+D)*N - 2 columns.
struct DesignSystem {
    Eigen::MatrixXd matrix;
    Eigen::VectorXd rhs;
    std::vector<CoefficientLabel> columns;
    Eigen::Index pair_count = 0;
    Eigen::Index sample_count = 0;
};

DesignSystem design_rows(const PressurePanel& panel, const Eigen::MatrixXd& demands,
                         Eigen::Index gauge_sensor);

struct FitOptions {
    Eigen::Index gauge_sensor = 0;
    double min_abs_k1 = 1e-9;
};

// Least-squares fit of the pairwise system on an anomaly-free window, the
// given channels entering as known demands. Dense QR; the per-channel kd
// gauge column is pinned to zero at the reference sensor.
CoefficientSet fit_ols(const PressurePanel& panel, const std::vector<DemandChannel>& known,
                       const FitOptions& options = {});

// N x N x T stack of pairwise estimates; column j of each time slice estimates
// every sensor from sensor j alone.
struct PressureTensor {
    TimeAxis axis;
    Eigen::Index n = 0;
    Eigen::MatrixXd data; // (n*n) x T, row i*n+j

    double at(Eigen::Index i, Eigen::Index j, Eigen::Index t) const {
        return data(i * n + j, t);
    }
    auto pair_series(Eigen::Index i, Eigen::Index j) const { return data.row(i * n + j); }
};

// demands: D x T in coeffs.demand_ids order (unknown channels supplied by the
// estimator or, for reference runs, by ground truth).
PressureTensor predict_pressure(const CoefficientSet& coeffs, const PressurePanel& panel,
                                const Eigen::MatrixXd& demands);

// Gathers coeffs' known channels from the panel and stacks them with the
// estimates supplied for the unknown channels (row-aligned with the unknown
// demand order). Throws if a channel is missing.
Eigen::MatrixXd assemble_demands(const CoefficientSet& coeffs, const PressurePanel& panel,
                                 const std::optional<Eigen::MatrixXd>& unknown_estimates = {});

struct MreSeries {
    TimeAxis axis;
    Eigen::Index n = 0;
    Eigen::MatrixXd full;    // (n*n) x T, observed minus estimated
    Eigen::MatrixXd reduced; // n*(n-1) x T, off-diagonal pairs only
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pair_index;
    std::vector<std::string> pair_labels;

    Eigen::Index pair_count() const { return reduced.rows(); }
};

MreSeries model_reconstruction_error(const PressurePanel& panel, const PressureTensor& estimate);

} // namespace leakwatch
