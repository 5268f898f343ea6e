#include "leakwatch/eval.hpp"

#include "leakwatch/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace leakwatch {

std::string variant_name(Variant v) {
    switch (v) {
    case Variant::base: return "base";
    case Variant::pinn: return "pinn";
    case Variant::fk: return "fk";
    }
    return "base";
}

Variant variant_from_name(const std::string& name) {
    if (name == "base") return Variant::base;
    if (name == "pinn") return Variant::pinn;
    if (name == "fk") return Variant::fk;
    throw ConfigError("unknown variant '" + name + "' (base|pinn|fk)");
}

std::string outcome_name(Outcome o) {
    switch (o) {
    case Outcome::tp: return "TP";
    case Outcome::fp: return "FP";
    case Outcome::fn: return "FN";
    case Outcome::clean: return "clean";
    }
    return "clean";
}

Metrics classification_metrics(int tp, int fp, int fn) {
    if (tp < 0 || fp < 0 || fn < 0)
        throw ContractError("classification_metrics: negative count");
    Metrics m;
    if (tp + fp > 0)
        m.precision = static_cast<double>(tp) / (tp + fp);
    if (tp + fn > 0)
        m.recall = static_cast<double>(tp) / (tp + fn);
    if (2 * tp + fn + fp > 0)
        m.f1 = 2.0 * tp / (2.0 * tp + fn + fp);
    return m;
}

void RunConfig::validate() const {
    if (train_window.start >= train_window.end || eval_window.start >= eval_window.end)
        throw ConfigError("run config: empty train or eval window");
    if (train_window.end > eval_window.start)
        throw ConfigError("run config: training window must precede the evaluation window");
    if (!(slack >= 0.0) || !(threshold > 0.0))
        throw ConfigError("run config: need slack >= 0 and threshold > 0");
}

ScenarioData scenario_data(const ScenarioTruth& truth) {
    ScenarioData data;
    data.panel = truth.panel;
    if (truth.irregular_demands.rows() > truth.known_count) {
        data.unknown_truth = truth.unknown_demands();
        data.unknown_ids = truth.unknown_demand_ids();
    }
    data.leak_start = truth.leak_start;
    return data;
}

namespace {

// Truth channels sliced to a window, as known-demand channels.
std::vector<DemandChannel> truth_channels(const ScenarioData& data, const TimeAxis& axis) {
    if (!data.unknown_truth)
        throw ContractError("full-knowledge run requires ground-truth demand channels");
    const std::int64_t i0 = data.panel.axis.index_of(axis.start);
    std::vector<DemandChannel> channels;
    for (Eigen::Index d = 0; d < data.unknown_truth->rows(); ++d)
        channels.push_back({data.unknown_ids[static_cast<std::size_t>(d)],
                            data.unknown_truth->row(d)
                                .segment(i0, axis.length)
                                .transpose()});
    return channels;
}

std::vector<DemandChannel> concat(std::vector<DemandChannel> a,
                                  const std::vector<DemandChannel>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

MreSeries window_mre(const CoefficientSet& coeffs, const PressurePanel& window,
                     const std::optional<TrainedModel>& model) {
    std::optional<Eigen::MatrixXd> estimates;
    if (model)
        estimates = estimate_unknown_demands(*model, window);
    const Eigen::MatrixXd demands = assemble_demands(coeffs, window, estimates);
    return model_reconstruction_error(window, predict_pressure(coeffs, window, demands));
}

// Standardize on the training window, detect on the evaluation window,
// classify against the leak timeline; shared by every run path.
void detect_and_classify(RunResult& result, const ScenarioData& data, const RunConfig& config,
                         const PressurePanel& train_panel, const PressurePanel& eval_panel) {
    const MreSeries train_mre = window_mre(result.coeffs, train_panel, result.model);
    result.eval_mre = window_mre(result.coeffs, eval_panel, result.model);

    const auto stats = fit_standardization(train_mre, config.mode, config.min_std);
    result.detection =
        detect(result.eval_mre, stats, config.slack, config.threshold, config.mode);

    const auto alarm = result.detection.first_alarm();
    if (!data.leak_start) {
        result.outcome.classification = alarm ? Outcome::fp : Outcome::clean;
    } else if (!alarm) {
        result.outcome.classification = Outcome::fn;
    } else if (alarm->time < *data.leak_start) {
        result.outcome.classification = Outcome::fp;
    } else {
        result.outcome.classification = Outcome::tp;
        result.outcome.ttd = time_to_detection(alarm->time, *data.leak_start);
    }

    if (result.model && data.unknown_truth) {
        // recovery quality is judged where the net learned: the training window
        const std::int64_t i0 = data.panel.axis.index_of(train_panel.axis.start);
        const Eigen::MatrixXd truth_block =
            data.unknown_truth->middleCols(i0, train_panel.axis.length);
        const Eigen::MatrixXd estimates = estimate_unknown_demands(*result.model, train_panel);
        result.demand_r2 = match_demand_channels(estimates, truth_block);
    }
}

} // namespace

RunResult run_variant(Variant variant, const ScenarioData& data, const RunConfig& config,
                      std::uint64_t seed) {
    config.validate();

    PressurePanel train_panel =
        slice_window(data.panel, config.train_window.start, config.train_window.end);
    PressurePanel eval_panel =
        slice_window(data.panel, config.eval_window.start, config.eval_window.end);

    RunResult result;
    result.outcome.seed = seed;
    result.outcome.variant = variant;
    result.outcome.leak_id = data.leak_label;

    FitOptions fit_options;
    fit_options.gauge_sensor = config.gauge_sensor;

    switch (variant) {
    case Variant::base: {
        result.coeffs = fit_ols(train_panel, train_panel.known_demands, fit_options);
        break;
    }
    case Variant::fk: {
        // perfect knowledge: truth channels join the measured ones
        auto channels = concat(train_panel.known_demands, truth_channels(data, train_panel.axis));
        result.coeffs = fit_ols(train_panel, channels, fit_options);
        train_panel.known_demands = channels;
        eval_panel.known_demands =
            concat(eval_panel.known_demands, truth_channels(data, eval_panel.axis));
        break;
    }
    case Variant::pinn: {
        CoefficientSet base = fit_ols(train_panel, train_panel.known_demands, fit_options);
        result.model = train(train_panel, train_panel.known_demands, base, config.net, seed);
        result.coeffs = result.model->coeffs;
        break;
    }
    }

    detect_and_classify(result, data, config, train_panel, eval_panel);
    return result;
}

RunResult run_with_model(const ScenarioData& data, const RunConfig& config,
                         const TrainedModel& model) {
    config.validate();
    if (model.coeffs.sensor_ids != data.panel.sensor_ids)
        throw ContractError("run_with_model: model sensor ids do not match the panel");

    PressurePanel train_panel =
        slice_window(data.panel, config.train_window.start, config.train_window.end);
    PressurePanel eval_panel =
        slice_window(data.panel, config.eval_window.start, config.eval_window.end);

    RunResult result;
    result.outcome.seed = model.seed;
    result.outcome.variant = Variant::pinn;
    result.outcome.leak_id = data.leak_label;
    result.model = model;
    result.coeffs = model.coeffs;

    detect_and_classify(result, data, config, train_panel, eval_panel);
    return result;
}

RunResult run_with_coeffs(const ScenarioData& data, const RunConfig& config,
                          const CoefficientSet& coeffs, Variant variant) {
    config.validate();
    if (coeffs.sensor_ids != data.panel.sensor_ids)
        throw ContractError("run_with_coeffs: coefficient sensor ids do not match the panel");

    PressurePanel train_panel =
        slice_window(data.panel, config.train_window.start, config.train_window.end);
    PressurePanel eval_panel =
        slice_window(data.panel, config.eval_window.start, config.eval_window.end);
    if (variant == Variant::fk) {
        train_panel.known_demands =
            concat(train_panel.known_demands, truth_channels(data, train_panel.axis));
        eval_panel.known_demands =
            concat(eval_panel.known_demands, truth_channels(data, eval_panel.axis));
    }

    RunResult result;
    result.outcome.variant = variant;
    result.outcome.leak_id = data.leak_label;
    result.coeffs = coeffs;

    detect_and_classify(result, data, config, train_panel, eval_panel);
    return result;
}

double r_squared(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
    if (estimate.size() != truth.size() || truth.size() == 0)
        throw ContractError("r_squared: length mismatch");
    const Eigen::VectorXd e = max_abs_scale(estimate).first;
    const Eigen::VectorXd t = max_abs_scale(truth).first;
    const double mean = t.mean();
    const double ss_tot = (t.array() - mean).square().sum();
    if (ss_tot == 0.0)
        return 0.0; // constant truth: shape comparison is meaningless
    const double ss_res = (t - e).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

namespace {

void enumerate_assignments(Eigen::Index truth_rows, Eigen::Index est_rows,
                           std::vector<Eigen::Index>& current, std::vector<bool>& used,
                           const Eigen::MatrixXd& score, double acc, double& best,
                           std::vector<Eigen::Index>& best_assign) {
    const auto k = static_cast<Eigen::Index>(current.size());
    if (k == truth_rows) {
        if (acc > best) {
            best = acc;
            best_assign = current;
        }
        return;
    }
    for (Eigen::Index e = 0; e < est_rows; ++e) {
        if (used[static_cast<std::size_t>(e)])
            continue;
        used[static_cast<std::size_t>(e)] = true;
        current.push_back(e);
        enumerate_assignments(truth_rows, est_rows, current, used, score, acc + score(k, e),
                              best, best_assign);
        current.pop_back();
        used[static_cast<std::size_t>(e)] = false;
    }
}

} // namespace

std::vector<double> match_demand_channels(const Eigen::MatrixXd& estimates,
                                          const Eigen::MatrixXd& truth) {
    const Eigen::Index k = truth.rows();
    const Eigen::Index u = estimates.rows();
    if (k == 0 || u == 0)
        return {};
    if (truth.cols() != estimates.cols())
        throw ContractError("match_demand_channels: length mismatch");
    if (k > u)
        throw ContractError("match_demand_channels: more truth channels than estimates");
    if (u > 8)
        throw ContractError("match_demand_channels: too many channels to enumerate");

    Eigen::MatrixXd score(k, u);
    for (Eigen::Index t = 0; t < k; ++t)
        for (Eigen::Index e = 0; e < u; ++e)
            score(t, e) = r_squared(estimates.row(e).transpose(), truth.row(t).transpose());

    std::vector<Eigen::Index> current, best_assign;
    std::vector<bool> used(static_cast<std::size_t>(u), false);
    double best = -std::numeric_limits<double>::infinity();
    enumerate_assignments(k, u, current, used, score, 0.0, best, best_assign);

    std::vector<double> out;
    for (Eigen::Index t = 0; t < k; ++t)
        out.push_back(score(t, best_assign[static_cast<std::size_t>(t)]));
    return out;
}

TtdSummary summarize_ttd(const std::vector<RunOutcome>& outcomes) {
    std::vector<double> ttds;
    for (const auto& o : outcomes)
        if (o.classification == Outcome::tp && o.ttd)
            ttds.push_back(static_cast<double>(*o.ttd));
    TtdSummary s;
    s.count = static_cast<int>(ttds.size());
    if (ttds.empty())
        return s;
    std::sort(ttds.begin(), ttds.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(ttds.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const auto hi = std::min(lo + 1, ttds.size() - 1);
        return ttds[lo] + (pos - static_cast<double>(lo)) * (ttds[hi] - ttds[lo]);
    };
    s.min = ttds.front();
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    s.max = ttds.back();
    s.mean = std::accumulate(ttds.begin(), ttds.end(), 0.0) / static_cast<double>(ttds.size());
    return s;
}

UqReport aggregate_outcomes(std::vector<RunOutcome> outcomes) {
    UqReport report;
    report.outcomes = std::move(outcomes);
    for (const auto& o : report.outcomes) {
        switch (o.classification) {
        case Outcome::tp: ++report.tp; break;
        case Outcome::fp: ++report.fp; break;
        case Outcome::fn: ++report.fn; break;
        case Outcome::clean: ++report.clean; break;
        }
    }
    report.metrics = classification_metrics(report.tp, report.fp, report.fn);
    report.ttd = summarize_ttd(report.outcomes);
    return report;
}

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& work) {
    jobs = std::max(1, std::min(jobs, count));
    if (jobs == 1) {
        for (int i = 0; i < count; ++i)
            work(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto runner = [&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                work(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j)
        threads.emplace_back(runner);
    for (auto& t : threads)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace

UqReport uncertainty_quantification(const ScenarioData& data, const RunConfig& config,
                                    Variant variant, int n_runs, std::uint64_t base_seed,
                                    int jobs) {
    if (n_runs < 1)
        throw ConfigError("uncertainty_quantification: need at least one run");
    std::vector<RunOutcome> outcomes(static_cast<std::size_t>(n_runs));
    parallel_for(n_runs, jobs, [&](int run) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(run);
        outcomes[static_cast<std::size_t>(run)] =
            run_variant(variant, data, config, seed).outcome;
    });
    return aggregate_outcomes(std::move(outcomes));
}

RunTraces run_traces(const RunResult& result, std::optional<Timestamp> leak_start) {
    RunTraces traces;
    traces.axis = result.eval_mre.axis;
    traces.leak_start = leak_start;

    const auto& stats = result.detection.stats;
    const bool mean_mode = result.detection.series_labels.size() == 1 &&
                           result.detection.series_labels[0] == "mean";
    if (mean_mode) {
        traces.standardized.resize(1, result.eval_mre.axis.length);
        const Eigen::VectorXd mean_series = result.eval_mre.reduced.colwise().mean().transpose();
        traces.standardized.row(0) =
            ((mean_series.array() - stats[0].mean) / stats[0].std).matrix().transpose();
    } else {
        traces.standardized.resize(result.eval_mre.pair_count(), result.eval_mre.axis.length);
        for (Eigen::Index p = 0; p < result.eval_mre.pair_count(); ++p)
            traces.standardized.row(p) =
                ((result.eval_mre.reduced.row(p).transpose().array() -
                  stats[static_cast<std::size_t>(p)].mean) /
                 stats[static_cast<std::size_t>(p)].std)
                    .matrix()
                    .transpose();
    }
    return traces;
}

std::vector<SweepCell> sensitivity_sweep(const std::vector<RunTraces>& runs,
                                         const std::vector<double>& slack_grid,
                                         const std::vector<double>& threshold_grid,
                                         int jobs) {
    if (runs.empty() || slack_grid.empty() || threshold_grid.empty())
        throw ConfigError("sensitivity_sweep: empty grid or no runs");

    const auto n_cells = slack_grid.size() * threshold_grid.size();
    std::vector<SweepCell> cells(n_cells);

    // statistics recomputed per slack; thresholding per epsilon
    parallel_for(static_cast<int>(slack_grid.size()), jobs, [&](int si) {
        const double slack = slack_grid[static_cast<std::size_t>(si)];
        std::vector<std::vector<std::optional<Timestamp>>> first_alarm(
            threshold_grid.size(),
            std::vector<std::optional<Timestamp>>(runs.size(), std::nullopt));

        for (std::size_t r = 0; r < runs.size(); ++r) {
            const auto& traces = runs[r];
            CusumConfig config;
            config.slack = slack;
            config.threshold = threshold_grid[0]; // validated; thresholds applied below
            config.stats = SeriesStats{0.0, 1.0, 1.0};
            for (Eigen::Index p = 0; p < traces.standardized.rows(); ++p) {
                const CusumTrace trace =
                    cusum_run(traces.standardized.row(p).transpose(), traces.axis, config);
                for (std::size_t ei = 0; ei < threshold_grid.size(); ++ei) {
                    const double eps = threshold_grid[ei];
                    for (Eigen::Index t = 0; t < traces.axis.length; ++t) {
                        if (std::max(trace.s_plus[t], trace.s_minus[t]) > eps) {
                            const Timestamp at = traces.axis.at(t);
                            auto& slot = first_alarm[ei][r];
                            if (!slot || at < *slot)
                                slot = at;
                            break;
                        }
                    }
                }
            }
        }

        for (std::size_t ei = 0; ei < threshold_grid.size(); ++ei) {
            SweepCell cell;
            cell.slack = slack;
            cell.threshold = threshold_grid[ei];
            double ttd_sum = 0.0;
            for (std::size_t r = 0; r < runs.size(); ++r) {
                const auto alarm = first_alarm[ei][r];
                const auto leak_start = runs[r].leak_start;
                if (!leak_start) {
                    if (alarm)
                        ++cell.fp;
                    continue;
                }
                if (!alarm)
                    ++cell.fn;
                else if (*alarm < *leak_start)
                    ++cell.fp;
                else {
                    ++cell.tp;
                    ttd_sum += static_cast<double>(*alarm - *leak_start);
                }
            }
            const Metrics m = classification_metrics(cell.tp, cell.fp, cell.fn);
            cell.f1 = m.f1;
            if (cell.tp > 0)
                cell.avg_ttd = ttd_sum / cell.tp;
            cells[static_cast<std::size_t>(si) * threshold_grid.size() + ei] = cell;
        }
    });
    return cells;
}

std::vector<bool> pareto_front(const std::vector<std::pair<double, double>>& ttd_f1) {
    const std::size_t n = ttd_f1.size();
    std::vector<bool> front(n, false);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (ttd_f1[a].first != ttd_f1[b].first)
            return ttd_f1[a].first < ttd_f1[b].first;
        return ttd_f1[a].second > ttd_f1[b].second;
    });

    // skyline scan over ttd groups; within a group only the max f1 survives,
    // and it must strictly beat everything cheaper
    double best_f1 = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        double group_max = -std::numeric_limits<double>::infinity();
        while (j < n && ttd_f1[order[j]].first == ttd_f1[order[i]].first) {
            group_max = std::max(group_max, ttd_f1[order[j]].second);
            ++j;
        }
        if (group_max > best_f1)
            for (std::size_t k = i; k < j; ++k)
                if (ttd_f1[order[k]].second == group_max)
                    front[order[k]] = true;
        best_f1 = std::max(best_f1, group_max);
        i = j;
    }
    return front;
}

void flag_pareto(std::vector<SweepCell>& cells) {
    std::vector<std::pair<double, double>> points;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        cells[i].pareto = false;
        if (cells[i].avg_ttd && cells[i].f1) {
            points.emplace_back(*cells[i].avg_ttd, *cells[i].f1);
            eligible.push_back(i);
        }
    }
    if (points.empty())
        return;
    const auto front = pareto_front(points);
    for (std::size_t k = 0; k < eligible.size(); ++k)
        cells[eligible[k]].pareto = front[k];
}

} // namespace leakwatch
