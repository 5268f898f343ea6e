#include "leakwatch/config.hpp"
#include "leakwatch/csv.hpp"
#include "leakwatch/errors.hpp"
#include "leakwatch/eval.hpp"
#include "leakwatch/report.hpp"
#include "leakwatch/synth.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <thread>

namespace {

using namespace leakwatch;

struct Overrides {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    double slack = -1.0;
    double threshold = -1.0;
    std::int64_t seed = -1;
    int jobs = 0;
    bool no_timestamp = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool needs_config = true) {
    auto* copt = cmd->add_option("-c,--config", o.config_path, "pipeline config (JSON)");
    if (needs_config)
        copt->required();
    cmd->add_option("-o,--out", o.out_dir, "output directory (overrides config)");
    cmd->add_option("--variant", o.variant, "base|pinn|fk (overrides config)");
    cmd->add_option("--delta", o.slack, "cusum slack override (sigma units)");
    cmd->add_option("--epsilon", o.threshold, "cusum threshold override");
    cmd->add_option("--seed", o.seed, "seed override");
    cmd->add_option("-j,--jobs", o.jobs, "parallel jobs");
    cmd->add_flag("--no-timestamp", o.no_timestamp,
                  "omit wall-clock lines from provenance headers");
}

PipelineConfig load_config(const Overrides& o) {
    PipelineConfig cfg = PipelineConfig::from_file(o.config_path);
    if (!o.out_dir.empty())
        cfg.output_dir = o.out_dir;
    else if (cfg.output_dir == "out")
        if (const char* root = std::getenv("LEAKWATCH_OUT"))
            cfg.output_dir = root;
    if (!o.variant.empty())
        cfg.variant = variant_from_name(o.variant);
    if (o.slack >= 0.0)
        cfg.run.slack = o.slack;
    if (o.threshold >= 0.0)
        cfg.run.threshold = o.threshold;
    if (o.seed >= 0)
        cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (o.jobs > 0)
        cfg.jobs = o.jobs;
    cfg.no_timestamp = o.no_timestamp;
    return cfg;
}

Provenance provenance_of(const PipelineConfig& cfg) {
    Provenance prov;
    prov.config_json = cfg.effective_json();
    prov.seed = cfg.seed;
    prov.timestamps = !cfg.no_timestamp;
    return prov;
}

int cmd_synth(const std::string& spec_path, const std::string& reference,
              const Overrides& o) {
    ScenarioSpec spec;
    if (!spec_path.empty()) {
        spec = ScenarioSpec::from_json(read_text_file(spec_path));
    } else if (reference == "abrupt") {
        spec = reference_scenario(ReferenceKind::abrupt);
    } else if (reference == "incipient") {
        spec = reference_scenario(ReferenceKind::incipient);
    } else if (reference == "clean") {
        spec = reference_scenario(ReferenceKind::clean);
    } else {
        throw ConfigError("synth: give --spec FILE or --reference abrupt|incipient|clean");
    }
    if (o.seed >= 0)
        spec.seed = static_cast<std::uint64_t>(o.seed);

    const ScenarioTruth truth = generate(spec);
    Provenance prov;
    prov.seed = spec.seed;
    prov.timestamps = !o.no_timestamp;
    const std::string out = o.out_dir.empty() ? "out" : o.out_dir;
    write_scenario_files(out, spec, truth, prov);
    std::cout << "scenario written to " << out << " (" << truth.panel.sensor_count()
              << " sensors, " << truth.panel.sample_count() << " samples)\n";
    for (const auto& note : truth.notes)
        std::cout << "note: " << note << "\n";
    return 0;
}

int cmd_train(const Overrides& o) {
    PipelineConfig cfg = load_config(o);
    const LoadedData loaded = load_pipeline_data(cfg);
    const Provenance prov = provenance_of(cfg);
    ensure_directory(cfg.output_dir);

    PressurePanel train_panel =
        slice_window(loaded.data.panel, loaded.train_window.start, loaded.train_window.end);
    FitOptions fit_options;
    fit_options.gauge_sensor = cfg.run.gauge_sensor;

    if (cfg.variant == Variant::pinn) {
        const CoefficientSet base =
            fit_ols(train_panel, train_panel.known_demands, fit_options);
        const TrainedModel model =
            train(train_panel, train_panel.known_demands, base, cfg.run.net, cfg.seed);
        write_model_files(cfg.output_dir, model, prov);
        write_coeffs_file(cfg.output_dir, model.coeffs);
        std::cout << "model written to " << cfg.output_dir << "/model.json (selected fold "
                  << model.selected_fold << ")\n";
    } else {
        std::vector<DemandChannel> channels = train_panel.known_demands;
        if (cfg.variant == Variant::fk) {
            if (!loaded.data.unknown_truth)
                throw ContractError("train: fk variant needs ground-truth demand channels");
            const std::int64_t i0 =
                loaded.data.panel.axis.index_of(train_panel.axis.start);
            for (Eigen::Index d = 0; d < loaded.data.unknown_truth->rows(); ++d)
                channels.push_back({loaded.data.unknown_ids[static_cast<std::size_t>(d)],
                                    loaded.data.unknown_truth->row(d)
                                        .segment(i0, train_panel.axis.length)
                                        .transpose()});
        }
        const CoefficientSet coeffs = fit_ols(train_panel, channels, fit_options);
        write_coeffs_file(cfg.output_dir, coeffs);
        std::cout << "coefficients written to " << cfg.output_dir << "/coeffs.json"
                  << " (residual rms " << coeffs.training_residual_rms << ")\n";
    }
    return 0;
}

int cmd_detect(const std::string& model_path, const std::string& coeffs_path,
               const Overrides& o) {
    PipelineConfig cfg = load_config(o);
    const LoadedData loaded = load_pipeline_data(cfg);
    const Provenance prov = provenance_of(cfg);

    RunResult result;
    if (!model_path.empty()) {
        const TrainedModel model = TrainedModel::from_json(read_text_file(model_path));
        result = run_with_model(loaded.data, cfg.run, model);
    } else if (!coeffs_path.empty()) {
        const CoefficientSet coeffs = CoefficientSet::from_json(read_text_file(coeffs_path));
        result = run_with_coeffs(loaded.data, cfg.run, coeffs, cfg.variant);
    } else {
        result = run_variant(cfg.variant, loaded.data, cfg.run, cfg.seed);
    }

    write_detection_report(cfg.output_dir, result, loaded.data.leak_start, cfg.run.slack,
                           cfg.run.threshold, prov);
    std::cout << "outcome: " << outcome_name(result.outcome.classification);
    if (result.outcome.ttd)
        std::cout << ", TTD " << format_duration(*result.outcome.ttd);
    if (auto alarm = result.detection.first_alarm())
        std::cout << ", first alarm " << format_timestamp(alarm->time) << " on "
                  << alarm->series;
    std::cout << "\nreport written to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_uq(const Overrides& o) {
    PipelineConfig cfg = load_config(o);
    const LoadedData loaded = load_pipeline_data(cfg);
    const Provenance prov = provenance_of(cfg);

    const UqReport report = uncertainty_quantification(
        loaded.data, cfg.run, cfg.variant, cfg.uq_runs, cfg.base_seed, cfg.jobs);
    write_uq_report(cfg.output_dir, report, prov);
    std::cout << "runs " << report.outcomes.size() << ": TP " << report.tp << ", FP "
              << report.fp << ", FN " << report.fn;
    if (report.metrics.f1)
        std::cout << ", F1 " << *report.metrics.f1;
    std::cout << "\nreport written to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_sweep(const Overrides& o) {
    PipelineConfig cfg = load_config(o);
    const LoadedData loaded = load_pipeline_data(cfg);
    const Provenance prov = provenance_of(cfg);

    if (cfg.slack_grid.empty())
        for (int i = 0; i <= 8; ++i)
            cfg.slack_grid.push_back(0.25 * i);
    if (cfg.threshold_grid.empty())
        for (int i = 0; i <= 8; ++i)
            cfg.threshold_grid.push_back(200.0 + 25.0 * i);

    const int n_models = cfg.variant == Variant::pinn ? cfg.uq_runs : 1;
    std::vector<RunTraces> traces(static_cast<std::size_t>(n_models));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n_models; i = next.fetch_add(1)) {
            const RunResult result = run_variant(
                cfg.variant, loaded.data, cfg.run,
                cfg.base_seed + static_cast<std::uint64_t>(i));
            traces[static_cast<std::size_t>(i)] =
                run_traces(result, loaded.data.leak_start);
        }
    };
    {
        std::vector<std::thread> pool;
        const int jobs = std::max(1, std::min(cfg.jobs, n_models));
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    std::vector<SweepCell> cells =
        sensitivity_sweep(traces, cfg.slack_grid, cfg.threshold_grid, cfg.jobs);
    flag_pareto(cells);
    write_sweep_report(cfg.output_dir, cells, prov);

    int stars = 0;
    for (const auto& c : cells)
        stars += c.pareto ? 1 : 0;
    std::cout << cells.size() << " cells over " << n_models << " model(s), " << stars
              << " Pareto-optimal\nreport written to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_report(const std::string& in_dir, std::string out_file) {
    if (out_file.empty())
        out_file = in_dir + "/summary.md";
    write_text_file(out_file, summarize_directory(in_dir));
    std::cout << "summary written to " << out_file << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pressure-based leakage detection for water distribution networks"};
    app.require_subcommand(1);

    Overrides o;
    std::string spec_path, reference, model_path, coeffs_path, in_dir, out_file;

    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic scenario");
    synth->add_option("--spec", spec_path, "scenario spec (JSON)");
    synth->add_option("--reference", reference, "canned scenario: abrupt|incipient|clean");
    synth->add_option("-o,--out", o.out_dir, "output directory");
    synth->add_option("--seed", o.seed, "seed override");
    synth->add_flag("--no-timestamp", o.no_timestamp, "omit wall-clock provenance");

    auto* train_cmd = app.add_subcommand("train", "fit coefficients and train the estimator");
    add_common(train_cmd, o);

    auto* detect = app.add_subcommand("detect", "run change-point detection and classify");
    add_common(detect, o);
    detect->add_option("--model", model_path, "trained model JSON");
    detect->add_option("--coeffs", coeffs_path, "coefficient set JSON");

    auto* uq = app.add_subcommand("uq", "repeated trainings with distinct seeds");
    add_common(uq, o);

    auto* sweep = app.add_subcommand("sweep", "delta/epsilon sensitivity grid and Pareto front");
    add_common(sweep, o);

    auto* report = app.add_subcommand("report", "summarize a results directory");
    report->add_option("--in", in_dir, "results directory")->required();
    report->add_option("--out", out_file, "summary file (default <in>/summary.md)");

    try {
        app.parse(argc, argv);
        if (synth->parsed())
            return cmd_synth(spec_path, reference, o);
        if (train_cmd->parsed())
            return cmd_train(o);
        if (detect->parsed())
            return cmd_detect(model_path, coeffs_path, o);
        if (uq->parsed())
            return cmd_uq(o);
        if (sweep->parsed())
            return cmd_sweep(o);
        if (report->parsed())
            return cmd_report(in_dir, out_file);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // CLI11 prints the usage message
        return code == 0 ? 0 : 1;
    } catch (const leakwatch::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
