#pragma once

#include "leakwatch/regression.hpp"
#include "leakwatch/time_axis.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace leakwatch {

// Standardization frozen from a leak-free training window; slack and
// threshold are therefore in sigma units of that window.
struct SeriesStats {
    double mean = 0.0;
    double std = 1.0;     // effective (floored) value used for z-scores
    double raw_std = 1.0; // as measured, before the floor
};

struct CusumConfig {
    double slack = 1.0;       // delta, >= 0
    double threshold = 300.0; // epsilon, > 0
    SeriesStats stats;

    void validate() const;
};

// Two-sided tabular cusum (Montgomery, Introduction to Statistical Quality
// Control): statistics keep accumulating past the first crossing.
struct CusumTrace {
    TimeAxis axis;
    Eigen::VectorXd s_plus;
    Eigen::VectorXd s_minus;
    std::optional<Eigen::Index> first_alarm_index;

    std::optional<Timestamp> first_alarm() const {
        if (!first_alarm_index)
            return std::nullopt;
        return axis.at(*first_alarm_index);
    }
};

CusumTrace cusum_run(const Eigen::VectorXd& series, const TimeAxis& axis,
                     const CusumConfig& config);

enum class DetectionMode { per_pair, mean };

struct Alarm {
    Timestamp time = 0;
    std::string series;
    double statistic = 0.0;
};

struct DetectionResult {
    std::vector<Alarm> alarms; // first crossing per monitored series, earliest first
    std::vector<std::string> series_labels;
    std::vector<SeriesStats> stats;
    std::vector<CusumTrace> traces;

    std::optional<Alarm> first_alarm() const {
        if (alarms.empty())
            return std::nullopt;
        return alarms.front();
    }
};

// Per-series mean/std over a leak-free window. The floor keeps near-exact
// model closures (std ~ 1e-13 of fp residue) from amplifying rounding noise
// into alarms; an exactly constant series is still rejected.
std::vector<SeriesStats> fit_standardization(const MreSeries& training, DetectionMode mode,
                                             double min_std = 1e-6);

// per_pair: every off-diagonal pair is monitored against its own frozen
// stats; the earliest crossing wins and names the pair. mean: one series,
// the across-pair average of the raw reduced MRE.
DetectionResult detect(const MreSeries& mre, const std::vector<SeriesStats>& stats,
                       double slack, double threshold, DetectionMode mode);

// TTD per the evaluation convention: detection time minus leak start.
Duration time_to_detection(Timestamp detected, Timestamp leak_start);

} // namespace leakwatch
