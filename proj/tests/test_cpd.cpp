#include "leakwatch/cpd.hpp"
#include "leakwatch/errors.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <limits>
#include <random>

using namespace leakwatch;

namespace {

TimeAxis axis_of(Eigen::Index t_len) { return TimeAxis{1546300800, 300, t_len}; }

CusumConfig config_of(double slack, double threshold, double mean = 0.0, double std = 1.0) {
    CusumConfig c;
    c.slack = slack;
    c.threshold = threshold;
    c.stats = SeriesStats{mean, std, std};
    return c;
}

MreSeries synthetic_mre(const Eigen::MatrixXd& reduced_like, Eigen::Index n) {
    // builds a consistent MreSeries for detect() tests from hand-made series
    MreSeries mre;
    mre.n = n;
    mre.axis = axis_of(reduced_like.cols());
    mre.reduced = reduced_like;
    mre.full = Eigen::MatrixXd::Zero(n * n, reduced_like.cols());
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j)
                continue;
            mre.full.row(i * n + j) = reduced_like.row(p);
            mre.pair_index.emplace_back(i, j);
            mre.pair_labels.push_back("s" + std::to_string(i + 1) + "<-s" +
                                      std::to_string(j + 1));
            ++p;
        }
    return mre;
}

} // namespace

TEST_CASE("cusum on an at-mean series stays at zero") {
    const Eigen::VectorXd series = Eigen::VectorXd::Constant(50, 3.25);
    for (double slack : {0.0, 0.5, 2.0}) {
        const CusumTrace trace =
            cusum_run(series, axis_of(50), config_of(slack, 10.0, 3.25, 0.5));
        CHECK(trace.s_plus.isZero(0.0));
        CHECK(trace.s_minus.isZero(0.0));
        CHECK(!trace.first_alarm_index);
    }
}

TEST_CASE("hand-rolled recurrence values") {
    Eigen::VectorXd z(4);
    z << 0, 2, 2, 2;
    const CusumTrace trace = cusum_run(z, axis_of(4), config_of(1.0, 100.0));
    CHECK(trace.s_plus[0] == 0.0);
    CHECK(trace.s_plus[1] == 1.0);
    CHECK(trace.s_plus[2] == 2.0);
    CHECK(trace.s_plus[3] == 3.0);
    CHECK(trace.s_minus.isZero(0.0));
}

TEST_CASE("mirrored input swaps the two statistics exactly") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> dist(0.0, 1.5);
    Eigen::VectorXd x(200);
    for (auto& v : x.reshaped())
        v = dist(rng);
    const CusumTrace a = cusum_run(x, axis_of(200), config_of(0.7, 30.0));
    const CusumTrace b = cusum_run(-x, axis_of(200), config_of(0.7, 30.0));
    CHECK(a.s_plus == b.s_minus);
    CHECK(a.s_minus == b.s_plus);
}

TEST_CASE("a five-sigma step alarms two samples after onset at delta 1, epsilon 8") {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(40);
    const Eigen::Index onset = 20;
    for (Eigen::Index t = onset; t < 40; ++t)
        x[t] = 5.0;
    const CusumTrace trace = cusum_run(x, axis_of(40), config_of(1.0, 8.0));
    // statistic reaches 4, then exactly 8 (not a strict crossing), then 12
    CHECK(trace.s_plus[onset] == 4.0);
    CHECK(trace.s_plus[onset + 1] == 8.0);
    REQUIRE(trace.first_alarm_index);
    CHECK(*trace.first_alarm_index == onset + 2);

    const auto ref = oracles::cusum_reference(
        std::vector<double>(x.data(), x.data() + x.size()), 0.0, 1.0, 1.0, 8.0);
    REQUIRE(ref.first_alarm);
    CHECK(*ref.first_alarm == onset + 2);
}

TEST_CASE("statistics keep accumulating after the first crossing") {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(30, 3.0);
    const CusumTrace trace = cusum_run(x, axis_of(30), config_of(0.0, 10.0));
    CHECK(trace.s_plus[29] == doctest::Approx(90.0));
    REQUIRE(trace.first_alarm_index);
    CHECK(*trace.first_alarm_index == 3); // 3, 6, 9, 12 > 10
}

TEST_CASE("exact agreement with the independent recurrence on random series") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> value(0.2, 2.0);
    std::uniform_real_distribution<double> slack_pick(0.0, 2.0);
    std::uniform_real_distribution<double> eps_pick(1.0, 40.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index t_len = 100;
        Eigen::VectorXd x(t_len);
        for (auto& v : x.reshaped())
            v = value(rng);
        const double mean = 0.2, stddev = 1.7;
        const double slack = slack_pick(rng), eps = eps_pick(rng);
        const CusumTrace trace =
            cusum_run(x, axis_of(t_len), config_of(slack, eps, mean, stddev));
        const auto ref = oracles::cusum_reference(
            std::vector<double>(x.data(), x.data() + x.size()), mean, stddev, slack, eps);
        for (Eigen::Index t = 0; t < t_len; ++t) {
            CHECK(trace.s_plus[t] == ref.s_plus[static_cast<std::size_t>(t)]);
            CHECK(trace.s_minus[t] == ref.s_minus[static_cast<std::size_t>(t)]);
        }
        const bool both_alarm = trace.first_alarm_index.has_value() == ref.first_alarm.has_value();
        CHECK(both_alarm);
        if (trace.first_alarm_index && ref.first_alarm)
            CHECK(*trace.first_alarm_index == *ref.first_alarm);
    }
}

TEST_CASE("slack and threshold monotonicity") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> value(0.5, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        Eigen::VectorXd x(150);
        for (auto& v : x.reshaped())
            v = value(rng);
        const CusumTrace tight = cusum_run(x, axis_of(150), config_of(0.3, 12.0));
        const CusumTrace loose = cusum_run(x, axis_of(150), config_of(0.9, 12.0));
        for (Eigen::Index t = 0; t < 150; ++t) {
            CHECK(loose.s_plus[t] <= tight.s_plus[t]);
            CHECK(loose.s_minus[t] <= tight.s_minus[t]);
        }
        if (tight.first_alarm_index && loose.first_alarm_index)
            CHECK(*loose.first_alarm_index >= *tight.first_alarm_index);
        else if (!tight.first_alarm_index)
            CHECK(!loose.first_alarm_index);

        const CusumTrace low = cusum_run(x, axis_of(150), config_of(0.3, 6.0));
        if (low.first_alarm_index && tight.first_alarm_index)
            CHECK(*tight.first_alarm_index >= *low.first_alarm_index);
        else if (!low.first_alarm_index)
            CHECK(!tight.first_alarm_index);
    }
}

TEST_CASE("statistic drains back to zero on at-mean input when slack is positive") {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(60);
    for (Eigen::Index t = 0; t < 5; ++t)
        x[t] = 4.0; // build up an excursion, then go quiet
    const CusumTrace trace = cusum_run(x, axis_of(60), config_of(0.5, 1e9));
    const double peak = trace.s_plus.maxCoeff();
    const auto drain_steps = static_cast<Eigen::Index>(std::ceil(peak / 0.5));
    REQUIRE(5 + drain_steps < 60);
    CHECK(trace.s_plus[5 + drain_steps] == 0.0);
    CHECK(trace.s_plus[59] == 0.0);
}

TEST_CASE("configuration validation") {
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
    CHECK_THROWS_AS(cusum_run(x, axis_of(5), config_of(-0.1, 5.0)), ConfigError);
    CHECK_THROWS_AS(cusum_run(x, axis_of(5), config_of(0.5, 0.0)), ConfigError);
    CHECK_THROWS_AS(cusum_run(x, axis_of(5), config_of(0.5, 5.0, 0.0, 0.0)), ConfigError);
    Eigen::VectorXd bad = x;
    bad[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cusum_run(bad, axis_of(5), config_of(0.5, 5.0)), NumericError);
}

TEST_CASE("standardization from a training window") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 0.2);
    Eigen::MatrixXd reduced(2, 300);
    for (auto& v : reduced.reshaped())
        v = 1.5 + noise(rng);
    const MreSeries training = synthetic_mre(reduced, 2);

    SUBCASE("per-pair stats") {
        const auto stats = fit_standardization(training, DetectionMode::per_pair);
        REQUIRE(stats.size() == 2);
        CHECK(stats[0].mean == doctest::Approx(1.5).epsilon(0.05));
        CHECK(stats[0].std == doctest::Approx(0.2).epsilon(0.2));
        CHECK(stats[0].raw_std == stats[0].std);
    }
    SUBCASE("floor applies to near-constant series") {
        const MreSeries tiny = synthetic_mre(Eigen::MatrixXd::Random(2, 50) * 1e-13, 2);
        const auto stats = fit_standardization(tiny, DetectionMode::per_pair, 1e-6);
        CHECK(stats[0].std == 1e-6);
        CHECK(stats[0].raw_std < 1e-12);
    }
    SUBCASE("exactly constant series is rejected") {
        const MreSeries flat = synthetic_mre(Eigen::MatrixXd::Zero(2, 50), 2);
        CHECK_THROWS_AS(fit_standardization(flat, DetectionMode::per_pair), ConfigError);
    }
}

TEST_CASE("detect") {
    const Eigen::Index t_len = 200;

    SUBCASE("all-zero error raises nothing") {
        std::mt19937_64 rng(2);
        std::normal_distribution<double> noise(0.0, 0.1);
        Eigen::MatrixXd train(2, t_len), eval = Eigen::MatrixXd::Zero(2, t_len);
        for (auto& v : train.reshaped())
            v = noise(rng);
        for (auto& v : eval.reshaped())
            v = noise(rng);
        const auto stats =
            fit_standardization(synthetic_mre(train, 2), DetectionMode::per_pair);
        const auto result =
            detect(synthetic_mre(eval, 2), stats, 0.5, 30.0, DetectionMode::per_pair);
        CHECK(result.alarms.empty());
    }
    SUBCASE("the stepped pair is named, and only that pair") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> noise(0.0, 0.1);
        Eigen::MatrixXd train(2, t_len), eval(2, t_len);
        for (auto& v : train.reshaped())
            v = noise(rng);
        for (auto& v : eval.reshaped())
            v = noise(rng);
        for (Eigen::Index t = 120; t < t_len; ++t)
            eval(1, t) += 1.0; // ~10 sigma step on the second pair only
        const MreSeries training = synthetic_mre(train, 2);
        const auto stats = fit_standardization(training, DetectionMode::per_pair);
        const auto result =
            detect(synthetic_mre(eval, 2), stats, 1.0, 8.0, DetectionMode::per_pair);
        REQUIRE(result.alarms.size() == 1);
        CHECK(result.alarms[0].series == training.pair_labels[1]);
        CHECK(result.alarms[0].time >= axis_of(t_len).at(120));
    }
    SUBCASE("mean mode monitors a single averaged series") {
        std::mt19937_64 rng(9);
        std::normal_distribution<double> noise(0.0, 0.1);
        Eigen::MatrixXd train(2, t_len), eval(2, t_len);
        for (auto& v : train.reshaped())
            v = noise(rng);
        for (auto& v : eval.reshaped())
            v = noise(rng);
        eval.row(0).rightCols(50).array() += 2.0;
        eval.row(1).rightCols(50).array() += 2.0;
        const auto stats =
            fit_standardization(synthetic_mre(train, 2), DetectionMode::mean);
        const auto result =
            detect(synthetic_mre(eval, 2), stats, 0.5, 10.0, DetectionMode::mean);
        REQUIRE(result.alarms.size() == 1);
        CHECK(result.alarms[0].series == "mean");
    }
}

TEST_CASE("time to detection") {
    CHECK(time_to_detection(1000, 1000) == 0);

    const Timestamp leak = parse_timestamp("2019-02-10 13:05");
    const Timestamp seen = parse_timestamp("2019-02-11 10:05");
    CHECK(time_to_detection(seen, leak) == 21 * 3600);
    CHECK(format_duration(time_to_detection(seen, leak)) == "21.0 h");

    const Timestamp slow_leak = parse_timestamp("2019-05-30 21:55");
    const Duration d28_2 = static_cast<Duration>(28.2 * 86400);
    CHECK(format_duration(time_to_detection(slow_leak + d28_2, slow_leak)) == "28.2 d");

    CHECK_THROWS_AS(time_to_detection(leak - 300, leak), ContractError);
}
