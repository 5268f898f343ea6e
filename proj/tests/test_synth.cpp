#include "leakwatch/errors.hpp"
#include "leakwatch/regression.hpp"
#include "leakwatch/synth.hpp"

#include <doctest.h>

using namespace leakwatch;

TEST_CASE("noise-free generation closes the model exactly") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::clean);
    spec.samples = 1000;
    spec.noise_sigma = 0.0;
    spec.diurnal.residual_amp = 0.0; // closure needs the exact model
    spec.demands.count = 0;
    const ScenarioTruth truth = generate(spec);

    const CoefficientSet fitted = fit_ols(truth.panel, {});
    const PressureTensor est =
        predict_pressure(fitted, truth.panel, Eigen::MatrixXd(0, 1000));
    const MreSeries mre = model_reconstruction_error(truth.panel, est);
    CHECK(mre.full.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("closure holds with demands once every channel is revealed") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::clean);
    spec.samples = 1500;
    spec.noise_sigma = 0.0;
    spec.diurnal.residual_amp = 0.0;
    spec.demands.known_count = spec.demands.count;
    const ScenarioTruth truth = generate(spec);

    const CoefficientSet fitted = fit_ols(truth.panel, truth.panel.known_demands);
    const Eigen::MatrixXd demands = assemble_demands(fitted, truth.panel);
    const MreSeries mre = model_reconstruction_error(
        truth.panel, predict_pressure(fitted, truth.panel, demands));
    CHECK(mre.full.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("generation is deterministic given the seed") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::abrupt);
    spec.samples = 3000;
    spec.leak.start = spec.start + 5ll * 86400; // keep the leak inside the shorter span
    spec.seed = 99;
    const ScenarioTruth a = generate(spec);
    const ScenarioTruth b = generate(spec);
    CHECK(a.panel.values == b.panel.values);
    CHECK(a.irregular_demands == b.irregular_demands);
    CHECK(a.leak_flow == b.leak_flow);
    CHECK(a.leak_couplings == b.leak_couplings);

    spec.seed = 100;
    const ScenarioTruth c = generate(spec);
    CHECK(a.panel.values != c.panel.values);
}

TEST_CASE("abrupt leak steps to its maximum instantaneously") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::abrupt);
    spec.samples = 12000;
    const ScenarioTruth truth = generate(spec);
    REQUIRE(truth.leak_start);
    const std::int64_t onset = truth.panel.axis.index_of(*truth.leak_start);
    CHECK(truth.leak_flow.head(onset).isZero(0.0));
    CHECK(truth.leak_flow[onset] == 5.2);
    CHECK(truth.leak_flow.tail(truth.leak_flow.size() - onset).minCoeff() == 5.2);
}

TEST_CASE("reference scenario shapes") {
    SUBCASE("eight weeks of five-minute samples") {
        const ScenarioSpec spec = reference_scenario(ReferenceKind::abrupt);
        CHECK(spec.samples == 16128);
        CHECK(spec.step == 300);
        CHECK(spec.sensors == 3);
        CHECK(spec.demands.count == 3);
    }
    SUBCASE("incipient ramp is nondecreasing up to 7.2") {
        ScenarioSpec spec = reference_scenario(ReferenceKind::incipient);
        const ScenarioTruth truth = generate(spec);
        REQUIRE(truth.leak_start);
        for (Eigen::Index t = 1; t < truth.leak_flow.size(); ++t)
            CHECK(truth.leak_flow[t] >= truth.leak_flow[t - 1]);
        CHECK(truth.leak_flow.maxCoeff() == doctest::Approx(7.2));
    }
    SUBCASE("two-week training head is leak-free") {
        const ScenarioSpec spec = reference_scenario(ReferenceKind::abrupt);
        const ScenarioTruth truth = generate(spec);
        const TimeWindow head = reference_train_window(spec);
        CHECK(head.end - head.start == 14 * 86400);
        const std::int64_t head_len = (head.end - head.start) / spec.step;
        CHECK(truth.leak_flow.head(head_len).isZero(0.0));
    }
}

TEST_CASE("leak couplings are heterogeneous and the shift clears the noise floor") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::abrupt);
    spec.samples = 16128;
    spec.diurnal.residual_amp = 0.0; // the margin is defined against sensor noise
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        spec.seed = seed;
        const ScenarioTruth truth = generate(spec);
        double max_diff = 0.0;
        for (Eigen::Index i = 0; i < spec.sensors; ++i)
            for (Eigen::Index j = 0; j < spec.sensors; ++j)
                max_diff = std::max(max_diff, std::abs(truth.leak_couplings[j] -
                                                       truth.leak_couplings[i]));
        CHECK(max_diff >= 1e-6);

        // empirical check: the post-leak mean of the best pair moves >= 3 sigma
        const CoefficientSet gauge_truth = truth.coeffs;
        const Eigen::MatrixXd demands = truth.irregular_demands;
        const MreSeries mre = model_reconstruction_error(
            truth.panel, predict_pressure(gauge_truth, truth.panel, demands));
        const std::int64_t onset = truth.panel.axis.index_of(*truth.leak_start);
        double best = 0.0;
        for (Eigen::Index p = 0; p < mre.pair_count(); ++p) {
            const auto series = mre.reduced.row(p);
            const auto pre = series.head(onset);
            const auto post = series.tail(series.size() - onset);
            const double pre_mean = pre.mean();
            const double pre_std = std::sqrt((pre.array() - pre_mean).square().mean());
            if (pre_std == 0.0)
                continue;
            best = std::max(best, std::abs(post.mean() - pre_mean) / pre_std);
        }
        CHECK(best >= 3.0);
    }
}

TEST_CASE("demand channels look like duty-cycled pulses") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::clean);
    spec.samples = 4032;
    const ScenarioTruth truth = generate(spec);
    REQUIRE(truth.irregular_demands.rows() == 3);
    for (Eigen::Index d = 0; d < 3; ++d) {
        const auto channel = truth.irregular_demands.row(d);
        CHECK(channel.minCoeff() >= 0.0);
        CHECK(channel.maxCoeff() > 0.0);
        // duty cycle: the channel must be off a meaningful share of the time
        const auto off_count =
            (channel.array() == 0.0).count();
        CHECK(off_count > channel.size() / 4);
        CHECK(off_count < channel.size());
    }
}

TEST_CASE("spec validation rejects malformed scenarios") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::abrupt);
    SUBCASE("too few sensors") {
        spec.sensors = 1;
        CHECK_THROWS_AS(generate(spec), ValidationError);
    }
    SUBCASE("leak outside the duration") {
        spec.leak.start = spec.start - 300;
        CHECK_THROWS_AS(generate(spec), ValidationError);
    }
    SUBCASE("incipient leak needs a ramp") {
        spec.leak.type = LeakType::incipient;
        spec.leak.ramp = 0;
        CHECK_THROWS_AS(generate(spec), ValidationError);
    }
    SUBCASE("negative noise") {
        spec.noise_sigma = -0.1;
        CHECK_THROWS_AS(generate(spec), ValidationError);
    }
}

TEST_CASE("scenario spec JSON round trip") {
    ScenarioSpec spec = reference_scenario(ReferenceKind::incipient);
    spec.seed = 321;
    spec.noise_sigma = 0.02;
    const ScenarioSpec back = ScenarioSpec::from_json(spec.to_json());
    CHECK(back.sensors == spec.sensors);
    CHECK(back.samples == spec.samples);
    CHECK(back.seed == spec.seed);
    CHECK(back.noise_sigma == spec.noise_sigma);
    CHECK(back.leak.start == spec.leak.start);
    CHECK(back.leak.max_flow == spec.leak.max_flow);
    CHECK(back.leak.ramp == spec.leak.ramp);
    CHECK(back.demands.count == spec.demands.count);

    // generation from the round-tripped spec is identical
    const ScenarioTruth a = generate(spec);
    const ScenarioTruth b = generate(back);
    CHECK(a.panel.values == b.panel.values);
}
