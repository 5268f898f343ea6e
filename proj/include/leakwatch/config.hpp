#pragma once

#include "leakwatch/eval.hpp"
#include "leakwatch/panel.hpp"
#include "leakwatch/synth.hpp"

#include <optional>
#include <string>
#include <vector>

namespace leakwatch {

// One config file drives every subcommand; experiments are permutations of
// this structure plus command-line overrides.
struct PipelineConfig {
    // data source: a generated scenario (inline or by file) or CSV paths
    std::optional<ScenarioSpec> scenario;
    std::optional<std::string> scenario_file;
    std::optional<std::string> panel_csv;
    PanelSchema schema;
    std::optional<std::string> truth_csv; // unknown-demand truth + leak flow
    std::optional<std::string> meta_json; // leak metadata for CSV sources

    std::optional<TimeWindow> train_window; // default: scenario reference windows
    std::optional<TimeWindow> eval_window;

    Variant variant = Variant::pinn;
    RunConfig run;

    std::vector<double> slack_grid;
    std::vector<double> threshold_grid;
    int uq_runs = 20;
    std::uint64_t base_seed = 1;

    std::uint64_t seed = 1;
    int jobs = 1;
    std::string output_dir = "out";
    bool no_timestamp = false;

    static PipelineConfig from_file(const std::string& path);
    static PipelineConfig from_json_text(const std::string& text, const std::string& context);
    std::string effective_json() const; // compact echo for provenance headers
};

// Materializes the configured data source. Scenario sources are generated on
// the fly; CSV sources are loaded and joined with truth/meta files when
// given. Fills unset windows from the scenario reference split and, when the
// config does not pin it, sizes the net output to the scenario's unknown
// channel count.
struct LoadedData {
    ScenarioData data;
    TimeWindow train_window;
    TimeWindow eval_window;
};

LoadedData load_pipeline_data(PipelineConfig& config);

} // namespace leakwatch
