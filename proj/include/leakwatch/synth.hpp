#pragma once

#include "leakwatch/panel.hpp"
#include "leakwatch/regression.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace leakwatch {

enum class LeakType { none, abrupt, incipient };

// Daily-periodic latent energy line: 24 h + 12 h sinusoids over a base level
// plus a small AR(1) wander shared by all sensors.
struct DiurnalSpec {
    double base = 30.0; // m head
    double amp_24h = 1.0;
    double amp_12h = 0.3;
    double ar1_rho = 0.95;
    double ar1_sigma = 0.02;
    // Per-sensor daily-periodic closure error (m head). Zero keeps the
    // pairwise model exact; the reference scenario turns it on because real
    // districts never satisfy the linearity assumption perfectly, and the
    // estimator is expected to soak these residuals up.
    double residual_amp = 0.0;
};

// Duty-cycled rectangular pulses with log-normal block amplitudes (long-tailed),
// smoothed by a 3-sample moving average. Industrial abstractions: mostly off,
// strong when running.
struct IrregularDemandSpec {
    int count = 3;
    int known_count = 0; // leading channels are measured and land in the panel
    double duty_min = 0.10, duty_max = 0.20;
    double cycle_hours_min = 6.0, cycle_hours_max = 14.0;
    double amp_log_mu = 1.79, amp_log_sigma = 0.2; // of ln(m^3/h); median ~6
    // per-channel amplitude multipliers (empty = all 1). The reference mix
    // has two dominant consumers and a minor one.
    std::vector<double> amp_scales;
};

struct LeakSpec {
    LeakType type = LeakType::none;
    Timestamp start = 0;
    double max_flow = 5.2;  // m^3/h
    Duration ramp = 0;      // incipient only: seconds from onset to max flow
};

// Draw ranges for ground-truth coefficients when none are given explicitly.
// Each demand channel couples hardest to its "home" sensor (industrial
// consumers are localized and cluster away from the last sensor, so their
// pressure signatures stay well separated from a leak near it); the leak
// couples hardest to the last sensor.
struct CoefficientRanges {
    double k0_min = -2.0, k0_max = 2.0;
    double k1_min = 0.85, k1_max = 1.25;
    double kd_min = 0.004, kd_max = 0.012;           // away-from-home entries
    double kd_home_min = 0.022, kd_home_max = 0.040; // home-sensor entry
    double leak_min = 0.004, leak_max = 0.010;       // away entries
    double leak_home_min = 0.018, leak_home_max = 0.032;
};

struct ScenarioSpec {
    Eigen::Index sensors = 3;
    Timestamp start = 1546300800; // 2019-01-01T00:00:00Z
    Duration step = 300;
    std::int64_t samples = 16128; // 8 weeks at 5 min
    std::optional<CoefficientSet> coefficients;
    CoefficientRanges ranges;
    DiurnalSpec diurnal;
    IrregularDemandSpec demands;
    LeakSpec leak;
    double noise_sigma = 0.01; // m head, per sensor and sample
    std::uint64_t seed = 1;

    void validate() const;
    std::string to_json() const;
    static ScenarioSpec from_json(const std::string& text);
};

struct ScenarioTruth {
    PressurePanel panel;                  // known channels included as measured demands
    Eigen::MatrixXd irregular_demands;    // all channels, D x T, known channels first
    std::vector<std::string> demand_ids;
    int known_count = 0;
    Eigen::VectorXd leak_flow;            // T, zero before leak start
    std::optional<Timestamp> leak_start;
    Eigen::VectorXd leak_couplings;       // per sensor, zero when no leak
    CoefficientSet coeffs;                // materialized ground truth
    std::vector<std::string> notes;       // logged coupling redraws etc.

    Eigen::MatrixXd unknown_demands() const {
        return irregular_demands.bottomRows(irregular_demands.rows() - known_count);
    }
    std::vector<std::string> unknown_demand_ids() const {
        return {demand_ids.begin() + known_count, demand_ids.end()};
    }
};

// Inverts the pairwise pressure model: with latent line L_t,
//   P_i(t) = (L_t - k0_i - sum_d kd_{d,i} Q_d(t)^2 - kL_i Q_leak(t)^2) / k1_i + noise,
// so the model closes exactly at zero noise. The leak rides on its own
// per-sensor couplings and is never part of the model's channel list.
// Deterministic given spec.seed.
ScenarioTruth generate(const ScenarioSpec& spec);

enum class ReferenceKind { abrupt, incipient, clean };

// Canned 3-sensor scenario with 3 unknown irregular demands, two weeks of
// leak-free head for training, 8 weeks total.
ScenarioSpec reference_scenario(ReferenceKind kind);

// Train on the two-week head, evaluate on the remainder.
TimeWindow reference_train_window(const ScenarioSpec& spec);
TimeWindow reference_eval_window(const ScenarioSpec& spec);

} // namespace leakwatch
