#include "oracles.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace oracles {

leakwatch::CoefficientSet fit_normal_equations(const leakwatch::PressurePanel& panel,
                                               const std::vector<leakwatch::DemandChannel>& known,
                                               Eigen::Index gauge_sensor) {
    const Eigen::Index n = panel.sensor_count();
    const Eigen::Index t_len = panel.sample_count();
    const Eigen::Index d_len = static_cast<Eigen::Index>(known.size());

    // unknown layout: k0 then k1 then kd, all skipping the gauge sensor
    const Eigen::Index per_block = n - 1;
    const Eigen::Index m = (2 + d_len) * per_block;
    auto k0_col = [&](Eigen::Index s) { return s < gauge_sensor ? s : s - 1; };
    auto k1_col = [&](Eigen::Index s) { return per_block + k0_col(s); };
    auto kd_col = [&](Eigen::Index d, Eigen::Index s) {
        return (2 + d) * per_block + k0_col(s);
    };

    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(m);

    std::vector<double> row(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            for (Eigen::Index t = 0; t < t_len; ++t) {
                std::fill(row.begin(), row.end(), 0.0);
                double rhs = 0.0;
                if (i == gauge_sensor) {
                    rhs -= panel.values(i, t);
                } else {
                    row[static_cast<std::size_t>(k0_col(i))] += 1.0;
                    row[static_cast<std::size_t>(k1_col(i))] += panel.values(i, t);
                }
                if (j == gauge_sensor) {
                    rhs += panel.values(j, t);
                } else {
                    row[static_cast<std::size_t>(k0_col(j))] -= 1.0;
                    row[static_cast<std::size_t>(k1_col(j))] -= panel.values(j, t);
                }
                for (Eigen::Index d = 0; d < d_len; ++d) {
                    const double q = known[static_cast<std::size_t>(d)].flow[t];
                    const double q2 = q * q;
                    if (i != gauge_sensor)
                        row[static_cast<std::size_t>(kd_col(d, i))] += q2;
                    if (j != gauge_sensor)
                        row[static_cast<std::size_t>(kd_col(d, j))] -= q2;
                }
                for (Eigen::Index a = 0; a < m; ++a) {
                    if (row[static_cast<std::size_t>(a)] == 0.0)
                        continue;
                    for (Eigen::Index b = 0; b < m; ++b)
                        ata(a, b) += row[static_cast<std::size_t>(a)] *
                                     row[static_cast<std::size_t>(b)];
                    atb[a] += row[static_cast<std::size_t>(a)] * rhs;
                }
            }
        }
    }

    const Eigen::VectorXd x = ata.ldlt().solve(atb);

    leakwatch::CoefficientSet coeffs;
    coeffs.sensor_ids = panel.sensor_ids;
    coeffs.gauge_sensor = gauge_sensor;
    coeffs.k0 = Eigen::VectorXd::Zero(n);
    coeffs.k1 = Eigen::VectorXd::Zero(n);
    coeffs.k1[gauge_sensor] = 1.0;
    coeffs.kd = Eigen::MatrixXd::Zero(d_len, n);
    for (const auto& ch : known) {
        coeffs.demand_ids.push_back(ch.id);
        coeffs.demand_kinds.push_back(leakwatch::DemandKind::known);
    }
    for (Eigen::Index s = 0; s < n; ++s) {
        if (s == gauge_sensor)
            continue;
        coeffs.k0[s] = x[k0_col(s)];
        coeffs.k1[s] = x[k1_col(s)];
        for (Eigen::Index d = 0; d < d_len; ++d)
            coeffs.kd(d, s) = x[kd_col(d, s)];
    }
    return coeffs;
}

CusumRef cusum_reference(const std::vector<double>& series, double mean, double stddev,
                         double slack, double threshold) {
    CusumRef ref;
    double sp = 0.0, sm = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double z = (series[t] - mean) / stddev;
        sp = std::max(0.0, sp + z - slack);
        sm = std::max(0.0, sm - z - slack);
        ref.s_plus.push_back(sp);
        ref.s_minus.push_back(sm);
        if (!ref.first_alarm && (sp > threshold || sm > threshold))
            ref.first_alarm = static_cast<long>(t);
    }
    return ref;
}

std::vector<bool> pareto_brute_force(const std::vector<std::pair<double, double>>& points) {
    std::vector<bool> front(points.size(), true);
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (i == j)
                continue;
            const bool no_worse = points[j].first <= points[i].first &&
                                  points[j].second >= points[i].second;
            const bool strict = points[j].first < points[i].first ||
                                points[j].second > points[i].second;
            if (no_worse && strict) {
                front[i] = false;
                break;
            }
        }
    return front;
}

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& theta, double h) {
    Eigen::VectorXd grad(theta.size());
    Eigen::VectorXd p = theta;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const double saved = p[k];
        p[k] = saved + h;
        const double up = f(p);
        p[k] = saved - h;
        const double down = f(p);
        p[k] = saved;
        grad[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

} // namespace oracles
