#pragma once

#include "leakwatch/cpd.hpp"
#include "leakwatch/demand_net.hpp"
#include "leakwatch/synth.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace leakwatch {

// base: regression only, unknown demands disregarded. pinn: the trained
// estimator masks them. fk: ground-truth unknown demands fed straight into
// the regression (the idealized upper bound).
enum class Variant { base, pinn, fk };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct Metrics {
    std::optional<double> precision, recall, f1;
};

// Run-population metrics; undefined denominators yield absent values, never
// a crash.
Metrics classification_metrics(int tp, int fp, int fn);

enum class Outcome { tp, fp, fn, clean };
std::string outcome_name(Outcome o);

struct RunOutcome {
    std::string leak_id;
    Outcome classification = Outcome::clean;
    std::optional<Duration> ttd; // present iff tp
    std::uint64_t seed = 0;
    Variant variant = Variant::pinn;
};

// Scenario inputs for one run, decoupled from how they were produced (the
// generator or a benchmark dataset).
struct ScenarioData {
    PressurePanel panel; // full span, known-demand channels included
    std::optional<Eigen::MatrixXd> unknown_truth; // D_u x T, fk + recovery metrics
    std::vector<std::string> unknown_ids;
    std::optional<Timestamp> leak_start;
    std::string leak_label = "leak";
};

ScenarioData scenario_data(const ScenarioTruth& truth);

struct RunConfig {
    TimeWindow train_window;
    TimeWindow eval_window;
    double slack = 1.0;
    double threshold = 300.0;
    DetectionMode mode = DetectionMode::per_pair;
    double min_std = 1e-6;
    Eigen::Index gauge_sensor = 0;
    NetConfig net;

    void validate() const;
};

struct RunResult {
    RunOutcome outcome;
    DetectionResult detection;
    CoefficientSet coeffs;
    std::optional<TrainedModel> model; // pinn only
    MreSeries eval_mre;
    std::vector<double> demand_r2; // per truth channel, pinn with truth only
};

// fit -> (train when pinn) -> predict -> MRE -> detect -> classify. base and
// fk are deterministic; pinn is deterministic given the seed.
RunResult run_variant(Variant variant, const ScenarioData& data, const RunConfig& config,
                      std::uint64_t seed);

// Same pipeline with the training stage replaced by a previously trained
// model (pinn) or fitted coefficients (base/fk).
RunResult run_with_model(const ScenarioData& data, const RunConfig& config,
                         const TrainedModel& model);
RunResult run_with_coeffs(const ScenarioData& data, const RunConfig& config,
                          const CoefficientSet& coeffs, Variant variant);

// R^2 of max-abs-normalized series (demand scale is not identifiable, so the
// comparison is shape-only).
double r_squared(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

// Net output channels are exchangeable: score per truth row under the
// injective channel assignment maximizing summed R^2.
std::vector<double> match_demand_channels(const Eigen::MatrixXd& estimates,
                                          const Eigen::MatrixXd& truth);

struct TtdSummary {
    int count = 0;
    double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0; // seconds
};

TtdSummary summarize_ttd(const std::vector<RunOutcome>& outcomes);

struct UqReport {
    std::vector<RunOutcome> outcomes;
    int tp = 0, fp = 0, fn = 0, clean = 0;
    Metrics metrics;
    TtdSummary ttd;
};

UqReport aggregate_outcomes(std::vector<RunOutcome> outcomes);

// n_runs independent trainings on the same data with distinct seeds
// (base_seed + run); results are deterministic regardless of jobs.
UqReport uncertainty_quantification(const ScenarioData& data, const RunConfig& config,
                                    Variant variant, int n_runs, std::uint64_t base_seed,
                                    int jobs = 1);

// What the delta/epsilon sweep reuses from one run: the standardized
// (z-score) evaluation series, so statistics are recomputed per slack and
// only thresholding varies per epsilon.
struct RunTraces {
    TimeAxis axis;
    Eigen::MatrixXd standardized; // S x T
    std::optional<Timestamp> leak_start;
};

RunTraces run_traces(const RunResult& result, std::optional<Timestamp> leak_start);

struct SweepCell {
    double slack = 0, threshold = 0;
    int tp = 0, fp = 0, fn = 0;
    std::optional<double> avg_ttd; // seconds, over tp runs only
    std::optional<double> f1;
    bool pareto = false;
};

std::vector<SweepCell> sensitivity_sweep(const std::vector<RunTraces>& runs,
                                         const std::vector<double>& slack_grid,
                                         const std::vector<double>& threshold_grid,
                                         int jobs = 1);

// Non-dominated subset of (ttd, f1) pairs: lower ttd and higher f1 both win;
// domination needs at least one strict inequality.
std::vector<bool> pareto_front(const std::vector<std::pair<double, double>>& ttd_f1);

// Flags the Pareto-optimal cells among those with a defined avg_ttd and f1.
void flag_pareto(std::vector<SweepCell>& cells);

} // namespace leakwatch
