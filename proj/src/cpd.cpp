#include "leakwatch/cpd.hpp"

#include "leakwatch/errors.hpp"

#include <algorithm>
#include <cmath>

namespace leakwatch {

void CusumConfig::validate() const {
    if (!(slack >= 0.0))
        throw ConfigError("cusum: slack must be >= 0");
    if (!(threshold > 0.0))
        throw ConfigError("cusum: threshold must be > 0");
    if (!(stats.std > 0.0))
        throw ConfigError("cusum: zero-variance training series");
}

CusumTrace cusum_run(const Eigen::VectorXd& series, const TimeAxis& axis,
                     const CusumConfig& config) {
    config.validate();
    if (series.size() != axis.length)
        throw ContractError("cusum_run: series length does not match axis");
    if (!series.allFinite())
        throw NumericError("cusum_run: non-finite input");

    CusumTrace trace;
    trace.axis = axis;
    trace.s_plus.resize(series.size());
    trace.s_minus.resize(series.size());

    double sp = 0.0, sm = 0.0;
    for (Eigen::Index t = 0; t < series.size(); ++t) {
        const double z = (series[t] - config.stats.mean) / config.stats.std;
        sp = std::max(0.0, sp + z - config.slack);
        sm = std::max(0.0, sm - z - config.slack);
        trace.s_plus[t] = sp;
        trace.s_minus[t] = sm;
        if (!trace.first_alarm_index && std::max(sp, sm) > config.threshold)
            trace.first_alarm_index = t;
    }
    return trace;
}

std::vector<SeriesStats> fit_standardization(const MreSeries& training, DetectionMode mode,
                                             double min_std) {
    auto stats_of = [&](const Eigen::VectorXd& series) {
        SeriesStats s;
        s.mean = series.mean();
        const double var =
            (series.array() - s.mean).square().sum() / static_cast<double>(series.size());
        s.raw_std = std::sqrt(var);
        if (s.raw_std == 0.0)
            throw ConfigError("standardization: zero-variance training series");
        s.std = std::max(s.raw_std, min_std);
        return s;
    };

    std::vector<SeriesStats> out;
    if (mode == DetectionMode::mean) {
        out.push_back(stats_of(training.reduced.colwise().mean().transpose()));
    } else {
        out.reserve(static_cast<std::size_t>(training.pair_count()));
        for (Eigen::Index p = 0; p < training.pair_count(); ++p)
            out.push_back(stats_of(training.reduced.row(p).transpose()));
    }
    return out;
}

DetectionResult detect(const MreSeries& mre, const std::vector<SeriesStats>& stats,
                       double slack, double threshold, DetectionMode mode) {
    DetectionResult result;
    if (mode == DetectionMode::mean) {
        result.series_labels = {"mean"};
        if (stats.size() != 1)
            throw ContractError("detect: mean mode expects exactly one stats entry");
    } else {
        result.series_labels = mre.pair_labels;
        if (stats.size() != static_cast<std::size_t>(mre.pair_count()))
            throw ContractError("detect: one stats entry per monitored pair required");
    }
    result.stats = stats;

    auto run_series = [&](const Eigen::VectorXd& series, std::size_t idx) {
        CusumConfig config{slack, threshold, stats[idx]};
        CusumTrace trace = cusum_run(series, mre.axis, config);
        if (trace.first_alarm_index) {
            const Eigen::Index t = *trace.first_alarm_index;
            result.alarms.push_back(
                {mre.axis.at(t), result.series_labels[idx],
                 std::max(trace.s_plus[t], trace.s_minus[t])});
        }
        result.traces.push_back(std::move(trace));
    };

    if (mode == DetectionMode::mean) {
        run_series(mre.reduced.colwise().mean().transpose(), 0);
    } else {
        for (Eigen::Index p = 0; p < mre.pair_count(); ++p)
            run_series(mre.reduced.row(p).transpose(), static_cast<std::size_t>(p));
    }

    std::stable_sort(result.alarms.begin(), result.alarms.end(),
                     [](const Alarm& a, const Alarm& b) { return a.time < b.time; });
    return result;
}

Duration time_to_detection(Timestamp detected, Timestamp leak_start) {
    if (detected < leak_start)
        throw ContractError("time_to_detection: alarm precedes leak start (false positive)");
    return detected - leak_start;
}

} // namespace leakwatch
