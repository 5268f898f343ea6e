#pragma once

#include "leakwatch/eval.hpp"

#include <string>
#include <vector>

namespace leakwatch {

// Every artifact carries the effective configuration and seed; the wall-clock
// line is the only non-reproducible bit and is suppressed by --no-timestamp.
struct Provenance {
    std::string config_json; // effective config, compact
    std::uint64_t seed = 0;
    bool timestamps = true;

    std::vector<std::string> lines() const; // "key: value" entries
    std::string csv_header() const;         // "# " prefixed block
};

void ensure_directory(const std::string& dir);

void write_detection_report(const std::string& dir, const RunResult& result,
                            std::optional<Timestamp> leak_start, double slack,
                            double threshold, const Provenance& prov);

void write_model_files(const std::string& dir, const TrainedModel& model,
                       const Provenance& prov);

void write_coeffs_file(const std::string& dir, const CoefficientSet& coeffs);

void write_uq_report(const std::string& dir, const UqReport& report, const Provenance& prov);

void write_sweep_report(const std::string& dir, const std::vector<SweepCell>& cells,
                        const Provenance& prov);

void write_scenario_files(const std::string& dir, const ScenarioSpec& spec,
                          const ScenarioTruth& truth, const Provenance& prov);

// Collects the JSON artifacts below a directory into one markdown summary.
std::string summarize_directory(const std::string& dir);

} // namespace leakwatch
