#include "leakwatch/regression.hpp"

#include "leakwatch/errors.hpp"

#include <Eigen/QR>
#include <json.hpp>

#include <cmath>
#include <sstream>

namespace leakwatch {

std::vector<Eigen::Index> CoefficientSet::demand_indices(DemandKind kind) const {
    std::vector<Eigen::Index> out;
    for (std::size_t d = 0; d < demand_kinds.size(); ++d)
        if (demand_kinds[d] == kind)
            out.push_back(static_cast<Eigen::Index>(d));
    return out;
}

std::string CoefficientLabel::name(const std::vector<std::string>& sensor_ids,
                                   const std::vector<std::string>& demand_ids) const {
    const std::string& s = sensor_ids[static_cast<std::size_t>(sensor)];
    switch (kind) {
    case Kind::intercept: return "k0[" + s + "]";
    case Kind::slope: return "k1[" + s + "]";
    case Kind::demand: return "kd[" + demand_ids[static_cast<std::size_t>(demand)] + "][" + s + "]";
    }
    return {};
}

std::string CoefficientLabel::name(const CoefficientSet& coeffs) const {
    return name(coeffs.sensor_ids, coeffs.demand_ids);
}

DesignSystem design_rows(const PressurePanel& panel, const Eigen::MatrixXd& demands,
                         Eigen::Index gauge_sensor) {
    const Eigen::Index n = panel.sensor_count();
    const Eigen::Index t_len = panel.sample_count();
    const Eigen::Index d_len = demands.rows();
    if (n < 2)
        throw ContractError("design_rows: need at least 2 sensors");
    if (d_len > 0 && demands.cols() != t_len)
        throw ContractError("design_rows: demands not aligned to panel axis");
    if (d_len > 0 && demands.minCoeff() < 0.0)
        throw ContractError("design_rows: negative demand flow");
    if (gauge_sensor < 0 || gauge_sensor >= n)
        throw ContractError("design_rows: gauge sensor out of range");

    DesignSystem sys;
    sys.sample_count = t_len;
    sys.pair_count = n * (n - 1) / 2;

    // Column layout: k0 (no gauge), k1 (no gauge), then kd channel-major.
    std::vector<Eigen::Index> k0_col(n, -1), k1_col(n, -1);
    Eigen::Index col = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (i != gauge_sensor) {
            k0_col[i] = col++;
            sys.columns.push_back({CoefficientLabel::Kind::intercept, i});
        }
    for (Eigen::Index i = 0; i < n; ++i)
        if (i != gauge_sensor) {
            k1_col[i] = col++;
            sys.columns.push_back({CoefficientLabel::Kind::slope, i});
        }
    const Eigen::Index kd_base = col;
    for (Eigen::Index d = 0; d < d_len; ++d)
        for (Eigen::Index i = 0; i < n; ++i)
            sys.columns.push_back({CoefficientLabel::Kind::demand, i, d});
    const Eigen::Index n_cols = kd_base + d_len * n;

    const Eigen::MatrixXd q2 = demands.array().square();

    sys.matrix = Eigen::MatrixXd::Zero(sys.pair_count * t_len, n_cols);
    sys.rhs = Eigen::VectorXd::Zero(sys.pair_count * t_len);

    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            for (Eigen::Index t = 0; t < t_len; ++t, ++row) {
                if (i == gauge_sensor)
                    sys.rhs[row] -= panel.values(i, t); // k1_r * P_r moved across
                else {
                    sys.matrix(row, k0_col[i]) = 1.0;
                    sys.matrix(row, k1_col[i]) = panel.values(i, t);
                }
                if (j == gauge_sensor)
                    sys.rhs[row] += panel.values(j, t);
                else {
                    sys.matrix(row, k0_col[j]) = -1.0;
                    sys.matrix(row, k1_col[j]) = -panel.values(j, t);
                }
                for (Eigen::Index d = 0; d < d_len; ++d) {
                    sys.matrix(row, kd_base + d * n + i) = q2(d, t);
                    sys.matrix(row, kd_base + d * n + j) = -q2(d, t);
                }
            }
        }
    }
    return sys;
}

CoefficientSet fit_ols(const PressurePanel& panel, const std::vector<DemandChannel>& known,
                       const FitOptions& options) {
    const Eigen::Index n = panel.sensor_count();
    const Eigen::Index d_len = static_cast<Eigen::Index>(known.size());

    Eigen::MatrixXd demands(d_len, panel.sample_count());
    for (Eigen::Index d = 0; d < d_len; ++d) {
        if (known[d].flow.size() != panel.sample_count())
            throw ContractError("fit_ols: demand channel '" + known[d].id +
                                "' not aligned to panel axis");
        demands.row(d) = known[d].flow;
    }

    DesignSystem sys = design_rows(panel, demands, options.gauge_sensor);

    // The kd gauge: pin kd[d][r] = 0 by dropping those columns. Only kd
    // differences are identifiable, so this costs nothing and keeps the
    // system full rank.
    std::vector<Eigen::Index> keep;
    keep.reserve(sys.columns.size());
    for (std::size_t c = 0; c < sys.columns.size(); ++c) {
        const auto& label = sys.columns[c];
        if (label.kind == CoefficientLabel::Kind::demand && label.sensor == options.gauge_sensor)
            continue;
        keep.push_back(static_cast<Eigen::Index>(c));
    }

    Eigen::MatrixXd a(sys.matrix.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        a.col(static_cast<Eigen::Index>(c)) = sys.matrix.col(keep[c]);

    if (a.rows() < a.cols())
        throw SingularFitError("fit_ols: " + std::to_string(a.rows()) +
                               " equations for " + std::to_string(a.cols()) +
                               " unknowns; training window too short");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < a.cols()) {
        const auto perm = qr.colsPermutation().indices();
        std::ostringstream msg;
        msg << "fit_ols: rank-deficient system (rank " << qr.rank() << " of " << a.cols()
            << "); dependent columns:";
        for (Eigen::Index c = qr.rank(); c < a.cols(); ++c) {
            // perm maps original column -> pivoted position; invert it
            for (Eigen::Index orig = 0; orig < a.cols(); ++orig)
                if (perm[orig] == c)
                    msg << ' '
                        << sys.columns[static_cast<std::size_t>(keep[static_cast<std::size_t>(orig)])]
                               .name(panel.sensor_ids, [&] {
                                   std::vector<std::string> ids;
                                   for (const auto& ch : known)
                                       ids.push_back(ch.id);
                                   return ids;
                               }());
        }
        throw SingularFitError(msg.str());
    }

    const Eigen::VectorXd solution = qr.solve(sys.rhs);

    CoefficientSet coeffs;
    coeffs.sensor_ids = panel.sensor_ids;
    coeffs.gauge_sensor = options.gauge_sensor;
    coeffs.k0 = Eigen::VectorXd::Zero(n);
    coeffs.k1 = Eigen::VectorXd::Zero(n);
    coeffs.k1[options.gauge_sensor] = 1.0;
    coeffs.kd = Eigen::MatrixXd::Zero(d_len, n);
    for (const auto& ch : known) {
        coeffs.demand_ids.push_back(ch.id);
        coeffs.demand_kinds.push_back(DemandKind::known);
    }
    for (std::size_t c = 0; c < keep.size(); ++c) {
        const auto& label = sys.columns[static_cast<std::size_t>(keep[c])];
        const double v = solution[static_cast<Eigen::Index>(c)];
        switch (label.kind) {
        case CoefficientLabel::Kind::intercept: coeffs.k0[label.sensor] = v; break;
        case CoefficientLabel::Kind::slope: coeffs.k1[label.sensor] = v; break;
        case CoefficientLabel::Kind::demand: coeffs.kd(label.demand, label.sensor) = v; break;
        }
    }

    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(coeffs.k1[i]) < options.min_abs_k1)
            throw SingularFitError("fit_ols: degenerate sensor '" + panel.sensor_ids[i] +
                                   "': |k1| = " + std::to_string(std::abs(coeffs.k1[i])) +
                                   " below " + std::to_string(options.min_abs_k1));

    const double rss = (a * solution - sys.rhs).squaredNorm();
    coeffs.training_residual_rms = std::sqrt(rss / static_cast<double>(a.rows()));
    return coeffs;
}

PressureTensor predict_pressure(const CoefficientSet& coeffs, const PressurePanel& panel,
                                const Eigen::MatrixXd& demands) {
    const Eigen::Index n = panel.sensor_count();
    const Eigen::Index t_len = panel.sample_count();
    if (coeffs.sensor_count() != n)
        throw ContractError("predict_pressure: coefficient set covers " +
                            std::to_string(coeffs.sensor_count()) + " sensors, panel has " +
                            std::to_string(n));
    if (demands.rows() != coeffs.demand_count())
        throw ContractError("predict_pressure: " + std::to_string(coeffs.demand_count()) +
                            " demand channels required, got " + std::to_string(demands.rows()));
    if (coeffs.demand_count() > 0 && demands.cols() != t_len)
        throw ContractError("predict_pressure: demands not aligned to panel axis");

    const Eigen::MatrixXd q2 = demands.array().square();

    PressureTensor tensor;
    tensor.axis = panel.axis;
    tensor.n = n;
    tensor.data.resize(n * n, t_len);
    for (Eigen::Index i = 0; i < n; ++i) {
        // True divisions keep the diagonal exact: k1/k1 == 1 and 0/k1 == 0 in fp.
        const double k1_i = coeffs.k1[i];
        for (Eigen::Index j = 0; j < n; ++j) {
            const double c0 = (coeffs.k0[j] - coeffs.k0[i]) / k1_i;
            const double c1 = coeffs.k1[j] / k1_i;
            auto row = tensor.data.row(i * n + j);
            row = (c1 * panel.values.row(j)).array() + c0;
            for (Eigen::Index d = 0; d < coeffs.demand_count(); ++d) {
                const double cd = (coeffs.kd(d, j) - coeffs.kd(d, i)) / k1_i;
                if (cd != 0.0)
                    row += cd * q2.row(d);
            }
        }
    }
    return tensor;
}

Eigen::MatrixXd assemble_demands(const CoefficientSet& coeffs, const PressurePanel& panel,
                                 const std::optional<Eigen::MatrixXd>& unknown_estimates) {
    Eigen::MatrixXd demands =
        Eigen::MatrixXd::Zero(coeffs.demand_count(), panel.sample_count());
    Eigen::Index next_unknown = 0;
    for (Eigen::Index d = 0; d < coeffs.demand_count(); ++d) {
        const auto& id = coeffs.demand_ids[static_cast<std::size_t>(d)];
        if (coeffs.demand_kinds[static_cast<std::size_t>(d)] == DemandKind::known) {
            const DemandChannel* found = nullptr;
            for (const auto& ch : panel.known_demands)
                if (ch.id == id)
                    found = &ch;
            if (!found)
                throw ContractError("missing demand channel '" + id + "' in panel");
            if (found->flow.size() != panel.sample_count())
                throw ContractError("demand channel '" + id + "' not aligned to panel axis");
            demands.row(d) = found->flow;
        } else {
            if (!unknown_estimates)
                throw ContractError("missing estimates for unknown demand channel '" + id + "'");
            if (unknown_estimates->cols() != panel.sample_count())
                throw ContractError("unknown-demand estimates not aligned to panel axis");
            if (next_unknown >= unknown_estimates->rows())
                throw ContractError("fewer estimate rows than unknown demand channels");
            demands.row(d) = unknown_estimates->row(next_unknown++);
        }
    }
    return demands;
}

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                             static_cast<Eigen::Index>(values.size()));
}

} // namespace

std::string CoefficientSet::to_json() const {
    nlohmann::json j;
    j["format"] = "leakwatch-coeffs-v1";
    j["sensor_ids"] = sensor_ids;
    j["gauge_sensor"] = gauge_sensor;
    j["k0"] = vector_json(k0);
    j["k1"] = vector_json(k1);
    j["training_residual_rms"] = training_residual_rms;
    nlohmann::json ds = nlohmann::json::array();
    for (Eigen::Index d = 0; d < demand_count(); ++d) {
        nlohmann::json e;
        e["id"] = demand_ids[static_cast<std::size_t>(d)];
        e["kind"] =
            demand_kinds[static_cast<std::size_t>(d)] == DemandKind::known ? "known" : "unknown";
        e["kd"] = vector_json(kd.row(d).transpose());
        ds.push_back(std::move(e));
    }
    j["demands"] = std::move(ds);
    return j.dump(2);
}

CoefficientSet CoefficientSet::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("coefficient set: ") + e.what());
    }
    if (j.value("format", "") != "leakwatch-coeffs-v1")
        throw ParseError("coefficient set: unknown format '" + j.value("format", "") + "'");

    CoefficientSet c;
    c.sensor_ids = j.at("sensor_ids").get<std::vector<std::string>>();
    c.gauge_sensor = j.at("gauge_sensor").get<Eigen::Index>();
    c.k0 = vector_from_json(j.at("k0"));
    c.k1 = vector_from_json(j.at("k1"));
    c.training_residual_rms = j.value("training_residual_rms", 0.0);
    const auto& ds = j.at("demands");
    c.kd.resize(static_cast<Eigen::Index>(ds.size()), c.k1.size());
    for (std::size_t d = 0; d < ds.size(); ++d) {
        c.demand_ids.push_back(ds[d].at("id").get<std::string>());
        c.demand_kinds.push_back(ds[d].at("kind").get<std::string>() == "known"
                                     ? DemandKind::known
                                     : DemandKind::unknown);
        c.kd.row(static_cast<Eigen::Index>(d)) =
            vector_from_json(ds[d].at("kd")).transpose();
    }
    if (c.k0.size() != c.k1.size() ||
        c.k1.size() != static_cast<Eigen::Index>(c.sensor_ids.size()))
        throw ParseError("coefficient set: inconsistent array sizes");
    return c;
}

MreSeries model_reconstruction_error(const PressurePanel& panel, const PressureTensor& estimate) {
    const Eigen::Index n = panel.sensor_count();
    const Eigen::Index t_len = panel.sample_count();
    if (estimate.n != n || estimate.data.cols() != t_len)
        throw ContractError("model_reconstruction_error: shape mismatch");

    MreSeries mre;
    mre.axis = panel.axis;
    mre.n = n;
    mre.full.resize(n * n, t_len);
    mre.reduced.resize(n * (n - 1), t_len);
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            mre.full.row(i * n + j) = panel.values.row(i) - estimate.data.row(i * n + j);
            if (i != j) {
                mre.reduced.row(p) = mre.full.row(i * n + j);
                mre.pair_index.emplace_back(i, j);
                mre.pair_labels.push_back(panel.sensor_ids[static_cast<std::size_t>(i)] + "<-" +
                                          panel.sensor_ids[static_cast<std::size_t>(j)]);
                ++p;
            }
        }
    }
    return mre;
}

} // namespace leakwatch
