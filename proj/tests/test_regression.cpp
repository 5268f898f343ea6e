#include "leakwatch/errors.hpp"
#include "leakwatch/regression.hpp"
#include "leakwatch/synth.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace leakwatch;

namespace {

PressurePanel random_panel(std::mt19937_64& rng, Eigen::Index n, Eigen::Index t_len) {
    std::normal_distribution<double> base(30.0, 2.0);
    std::normal_distribution<double> wiggle(0.0, 1.0);
    PressurePanel panel;
    panel.axis = TimeAxis{0, 300, t_len};
    for (Eigen::Index i = 0; i < n; ++i)
        panel.sensor_ids.push_back("s" + std::to_string(i + 1));
    panel.values.resize(n, t_len);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double level = base(rng);
        for (Eigen::Index t = 0; t < t_len; ++t)
            panel.values(i, t) = level + wiggle(rng);
    }
    return panel;
}

CoefficientSet random_coeffs(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d_len) {
    std::uniform_real_distribution<double> k0(-2.0, 2.0);
    std::uniform_real_distribution<double> k1(0.5, 1.5);
    std::uniform_real_distribution<double> kd(0.001, 0.05);
    CoefficientSet c;
    c.k0.resize(n);
    c.k1.resize(n);
    c.kd.resize(d_len, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        c.sensor_ids.push_back("s" + std::to_string(i + 1));
        c.k0[i] = k0(rng);
        c.k1[i] = k1(rng);
    }
    for (Eigen::Index d = 0; d < d_len; ++d) {
        c.demand_ids.push_back("q" + std::to_string(d + 1));
        c.demand_kinds.push_back(DemandKind::known);
        for (Eigen::Index i = 0; i < n; ++i)
            c.kd(d, i) = kd(rng);
    }
    return c;
}

// gauge-equivalent representative: k0[r]=0, k1[r]=1, kd[d][r]=0
CoefficientSet to_gauge(const CoefficientSet& c, Eigen::Index r) {
    CoefficientSet g = c;
    g.gauge_sensor = r;
    const double scale = c.k1[r];
    g.k0 = (c.k0.array() - c.k0[r]) / scale;
    g.k1 = c.k1 / scale;
    for (Eigen::Index d = 0; d < c.kd.rows(); ++d)
        g.kd.row(d) = (c.kd.row(d).array() - c.kd(d, r)) / scale;
    return g;
}

double max_rel_diff(const CoefficientSet& a, const CoefficientSet& b) {
    auto rel = [](double x, double y) {
        const double denom = std::max({std::abs(x), std::abs(y), 1e-6});
        return std::abs(x - y) / denom;
    };
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.k0.size(); ++i) {
        worst = std::max(worst, rel(a.k0[i], b.k0[i]));
        worst = std::max(worst, rel(a.k1[i], b.k1[i]));
    }
    for (Eigen::Index d = 0; d < a.kd.rows(); ++d)
        for (Eigen::Index i = 0; i < a.kd.cols(); ++i)
            worst = std::max(worst, rel(a.kd(d, i), b.kd(d, i)));
    return worst;
}

} // namespace

TEST_CASE("design_rows counts rows and gauge-eliminated columns") {
    std::mt19937_64 rng(11);

    SUBCASE("two sensors, no demands, one sample") {
        const PressurePanel panel = random_panel(rng, 2, 1);
        const DesignSystem sys = design_rows(panel, Eigen::MatrixXd(0, 1), 0);
        CHECK(sys.matrix.rows() == 1);
        CHECK(sys.matrix.cols() == 2); // k0_2 and k1_2 free; k0_1 = 0, k1_1 = 1
        CHECK(sys.pair_count == 1);
    }
    SUBCASE("three sensors, one demand, ten samples") {
        const PressurePanel panel = random_panel(rng, 3, 10);
        const Eigen::MatrixXd demands = Eigen::MatrixXd::Random(1, 10).cwiseAbs();
        const DesignSystem sys = design_rows(panel, demands, 0);
        CHECK(sys.matrix.rows() == 30);
        CHECK(sys.matrix.cols() == 3 * 3 - 2);
        CHECK(sys.columns.size() == 7);
    }
    SUBCASE("all-zero demands reduce to the demand-free system") {
        const PressurePanel panel = random_panel(rng, 3, 5);
        const DesignSystem without = design_rows(panel, Eigen::MatrixXd(0, 5), 0);
        const DesignSystem with = design_rows(panel, Eigen::MatrixXd::Zero(2, 5), 0);
        CHECK(with.matrix.leftCols(4) == without.matrix);
        CHECK(with.matrix.rightCols(6).isZero(0.0));
        CHECK(with.rhs == without.rhs);
    }
    SUBCASE("negative demand flow violates the contract") {
        const PressurePanel panel = random_panel(rng, 2, 3);
        Eigen::MatrixXd demands = Eigen::MatrixXd::Zero(1, 3);
        demands(0, 1) = -1.0;
        CHECK_THROWS_AS(design_rows(panel, demands, 0), ContractError);
    }
}

TEST_CASE("fit_ols on identical sensors recovers the identity relation") {
    PressurePanel panel;
    panel.axis = TimeAxis{0, 300, 20};
    panel.sensor_ids = {"a", "b"};
    Eigen::VectorXd series(20);
    for (int t = 0; t < 20; ++t)
        series[t] = 30.0 + std::sin(0.3 * t);
    panel.values.resize(2, 20);
    panel.values.row(0) = series.transpose();
    panel.values.row(1) = series.transpose();

    const CoefficientSet coeffs = fit_ols(panel, {});
    CHECK(coeffs.k0[0] == 0.0);
    CHECK(coeffs.k1[0] == 1.0);
    CHECK(coeffs.k0[1] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(coeffs.k1[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(coeffs.training_residual_rms == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fit_ols recovers generator ground truth at zero noise") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::clean);
    spec.samples = 2016; // one week is plenty for a fit
    spec.noise_sigma = 0.0;
    spec.diurnal.residual_amp = 0.0;
    spec.demands.known_count = 3; // reveal all channels to the fit
    const ScenarioTruth truth = generate(spec);

    const CoefficientSet fitted = fit_ols(truth.panel, truth.panel.known_demands);
    const CoefficientSet expected = to_gauge(truth.coeffs, 0);
    CHECK(max_rel_diff(fitted, expected) <= 1e-8);
}

TEST_CASE("fit_ols under noise stays near truth and matches the normal-equations oracle") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::clean);
    spec.samples = 2016;
    spec.noise_sigma = 0.01;
    spec.diurnal.residual_amp = 0.0;
    spec.demands.known_count = 3;
    const ScenarioTruth truth = generate(spec);

    const CoefficientSet fitted = fit_ols(truth.panel, truth.panel.known_demands);
    const CoefficientSet expected = to_gauge(truth.coeffs, 0);
    for (Eigen::Index i = 0; i < fitted.k1.size(); ++i)
        CHECK(std::abs(fitted.k1[i] - expected.k1[i]) <= 0.05 * std::abs(expected.k1[i]));

    const CoefficientSet reference =
        oracles::fit_normal_equations(truth.panel, truth.panel.known_demands, 0);
    CHECK(max_rel_diff(fitted, reference) <= 1e-8);
}

TEST_CASE("fit_ols equals the normal-equations oracle on random small instances") {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> n_pick(2, 5);
    std::uniform_int_distribution<int> t_pick(12, 50);
    std::uniform_int_distribution<int> d_pick(0, 2);
    for (int trial = 0; trial < 25; ++trial) {
        const Eigen::Index n = n_pick(rng);
        const Eigen::Index t_len = t_pick(rng);
        const Eigen::Index d_len = d_pick(rng);
        const PressurePanel panel = random_panel(rng, n, t_len);
        std::vector<DemandChannel> known;
        std::uniform_real_distribution<double> amp(0.0, 5.0);
        for (Eigen::Index d = 0; d < d_len; ++d) {
            Eigen::VectorXd flow(t_len);
            for (auto& q : flow.reshaped())
                q = amp(rng);
            known.push_back({"q" + std::to_string(d + 1), flow});
        }
        const CoefficientSet qr_fit = fit_ols(panel, known);
        const CoefficientSet ne_fit = oracles::fit_normal_equations(panel, known, 0);
        CHECK(max_rel_diff(qr_fit, ne_fit) <= 1e-8);
    }
}

TEST_CASE("fit_ols failure modes") {
    SUBCASE("rank-deficient data names dependent columns") {
        PressurePanel panel;
        panel.axis = TimeAxis{0, 300, 10};
        panel.sensor_ids = {"a", "b"};
        panel.values = Eigen::MatrixXd::Constant(2, 10, 25.0); // constant everywhere
        CHECK_THROWS_WITH_AS(fit_ols(panel, {}), doctest::Contains("dependent columns"),
                             SingularFitError);
    }
    SUBCASE("degenerate slope is rejected") {
        PressurePanel panel;
        panel.axis = TimeAxis{0, 300, 40};
        panel.sensor_ids = {"a", "b"};
        panel.values.resize(2, 40);
        for (int t = 0; t < 40; ++t) {
            panel.values(0, t) = 30.0 + std::sin(0.4 * t);
            panel.values(1, t) = 1e12 * std::sin(0.4 * t); // needs |k1| ~ 1e-12 to match
        }
        CHECK_THROWS_AS(fit_ols(panel, {}), SingularFitError);
    }
    SUBCASE("too few rows") {
        std::mt19937_64 rng(5);
        const PressurePanel panel = random_panel(rng, 2, 1);
        CHECK_THROWS_AS(fit_ols(panel, {}), SingularFitError);
    }
}

TEST_CASE("predict_pressure") {
    std::mt19937_64 rng(31);

    SUBCASE("diagonal reproduces the observation exactly") {
        const PressurePanel panel = random_panel(rng, 4, 30);
        const CoefficientSet coeffs = random_coeffs(rng, 4, 2);
        const Eigen::MatrixXd demands = Eigen::MatrixXd::Random(2, 30).cwiseAbs() * 3.0;
        const PressureTensor est = predict_pressure(coeffs, panel, demands);
        for (Eigen::Index i = 0; i < 4; ++i)
            for (Eigen::Index t = 0; t < 30; ++t)
                CHECK(est.at(i, i, t) == panel.values(i, t));
    }
    SUBCASE("ground-truth inputs reproduce every pair at zero noise") {
        ScenarioSpec spec = reference_scenario(ReferenceKind::clean);
        spec.samples = 500;
        spec.noise_sigma = 0.0;
        spec.diurnal.residual_amp = 0.0;
        const ScenarioTruth truth = generate(spec);
        const PressureTensor est =
            predict_pressure(truth.coeffs, truth.panel, truth.irregular_demands);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < spec.sensors; ++i)
            for (Eigen::Index j = 0; j < spec.sensors; ++j)
                worst = std::max(worst, (est.pair_series(i, j).transpose() -
                                         truth.panel.values.row(i).transpose())
                                            .cwiseAbs()
                                            .maxCoeff());
        CHECK(worst <= 1e-9);
    }
    SUBCASE("equal coefficients collapse estimates to the source sensor") {
        const PressurePanel panel = random_panel(rng, 3, 10);
        CoefficientSet coeffs = random_coeffs(rng, 3, 0);
        coeffs.k0.setConstant(1.3);
        coeffs.k1.setConstant(0.9);
        const PressureTensor est = predict_pressure(coeffs, panel, Eigen::MatrixXd(0, 10));
        for (Eigen::Index i = 0; i < 3; ++i)
            for (Eigen::Index j = 0; j < 3; ++j)
                CHECK((est.pair_series(i, j) - panel.values.row(j)).cwiseAbs().maxCoeff() <=
                      1e-12);
    }
    SUBCASE("missing demand channel is a contract error") {
        const PressurePanel panel = random_panel(rng, 3, 10);
        const CoefficientSet coeffs = random_coeffs(rng, 3, 2);
        CHECK_THROWS_AS(predict_pressure(coeffs, panel, Eigen::MatrixXd(1, 10)),
                        ContractError);
    }
}

TEST_CASE("gauge invariance of the pairwise estimate") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> scale_pick(0.1, 10.0);
    std::uniform_real_distribution<double> shift_pick(-5.0, 5.0);
    for (int trial = 0; trial < 30; ++trial) {
        const PressurePanel panel = random_panel(rng, 3, 12);
        const CoefficientSet coeffs = random_coeffs(rng, 3, 1);
        const Eigen::MatrixXd demands = Eigen::MatrixXd::Random(1, 12).cwiseAbs() * 4.0;

        CoefficientSet scaled = coeffs;
        const double c = scale_pick(rng);
        const double shift = shift_pick(rng);
        scaled.k0 = (coeffs.k0.array() + shift) * c;
        scaled.k1 = coeffs.k1 * c;
        scaled.kd = coeffs.kd * c;

        const PressureTensor a = predict_pressure(coeffs, panel, demands);
        const PressureTensor b = predict_pressure(scaled, panel, demands);
        const double denom = a.data.cwiseAbs().maxCoeff();
        CHECK((a.data - b.data).cwiseAbs().maxCoeff() <= 1e-10 * denom);
    }
}

TEST_CASE("demand monotonicity: positive coupling differences push the estimate up") {
    std::mt19937_64 rng(99);
    const PressurePanel panel = random_panel(rng, 2, 8);
    CoefficientSet coeffs = random_coeffs(rng, 2, 1);
    coeffs.kd(0, 0) = 0.002;
    coeffs.kd(0, 1) = 0.03; // kd[d][j] - kd[d][i] > 0 for (i,j) = (0,1)
    double previous = -1e300;
    for (double q = 0.0; q <= 8.0; q += 0.5) {
        const Eigen::MatrixXd demands = Eigen::MatrixXd::Constant(1, 8, q);
        const PressureTensor est = predict_pressure(coeffs, panel, demands);
        const double value = est.at(0, 1, 3);
        CHECK(value >= previous);
        previous = value;
    }
}

TEST_CASE("model reconstruction error") {
    std::mt19937_64 rng(123);

    SUBCASE("exact model gives an all-zero reduced series") {
        const PressurePanel panel = random_panel(rng, 3, 15);
        PressureTensor est;
        est.axis = panel.axis;
        est.n = 3;
        est.data.resize(9, 15);
        for (Eigen::Index i = 0; i < 3; ++i)
            for (Eigen::Index j = 0; j < 3; ++j)
                est.data.row(i * 3 + j) = panel.values.row(i);
        const MreSeries mre = model_reconstruction_error(panel, est);
        CHECK(mre.full.isZero(0.0));
        CHECK(mre.reduced.isZero(0.0));
    }
    SUBCASE("zero diagonal holds exactly for arbitrary inputs") {
        const PressurePanel panel = random_panel(rng, 4, 25);
        const CoefficientSet coeffs = random_coeffs(rng, 4, 1);
        const Eigen::MatrixXd demands = Eigen::MatrixXd::Random(1, 25).cwiseAbs();
        const MreSeries mre =
            model_reconstruction_error(panel, predict_pressure(coeffs, panel, demands));
        for (Eigen::Index i = 0; i < 4; ++i)
            CHECK(mre.full.row(i * 4 + i).isZero(0.0));
        CHECK(mre.pair_index.size() == 12);
        CHECK(mre.reduced.rows() == 12);
    }
    SUBCASE("a constant observation bias shifts one row of pairs linearly") {
        const PressurePanel panel = random_panel(rng, 3, 10);
        const CoefficientSet coeffs = random_coeffs(rng, 3, 0);
        const Eigen::MatrixXd none(0, 10);
        const MreSeries before =
            model_reconstruction_error(panel, predict_pressure(coeffs, panel, none));

        PressurePanel biased = panel;
        biased.values.row(1).array() += 0.5;
        // pairs estimated *from* other sensors see the bias one-to-one
        const MreSeries after =
            model_reconstruction_error(biased, predict_pressure(coeffs, biased, none));
        for (Eigen::Index j = 0; j < 3; ++j) {
            if (j == 1)
                continue;
            const Eigen::VectorXd delta = (after.full.row(1 * 3 + j) -
                                           before.full.row(1 * 3 + j))
                                              .transpose();
            CHECK((delta.array() - 0.5).abs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("coefficient set serializes and restores exactly") {
    std::mt19937_64 rng(7);
    CoefficientSet coeffs = random_coeffs(rng, 4, 2);
    coeffs.demand_kinds[1] = DemandKind::unknown;
    coeffs.training_residual_rms = 0.0123456789;
    const CoefficientSet back = CoefficientSet::from_json(coeffs.to_json());
    CHECK(back.k0 == coeffs.k0);
    CHECK(back.k1 == coeffs.k1);
    CHECK(back.kd == coeffs.kd);
    CHECK(back.sensor_ids == coeffs.sensor_ids);
    CHECK(back.demand_ids == coeffs.demand_ids);
    CHECK(back.demand_kinds == coeffs.demand_kinds);
    CHECK(back.training_residual_rms == coeffs.training_residual_rms);
}
