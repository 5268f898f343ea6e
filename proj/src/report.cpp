#include "leakwatch/report.hpp"

#include "leakwatch/csv.hpp"
#include "leakwatch/errors.hpp"
#include "leakwatch/svg.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <sstream>

namespace leakwatch {

namespace {

std::string now_utc() {
    const auto now = std::chrono::system_clock::now();
    return format_timestamp(std::chrono::duration_cast<std::chrono::seconds>(
                                now.time_since_epoch())
                                .count());
}

nlohmann::json provenance_json(const Provenance& prov) {
    nlohmann::json j;
    j["tool"] = "leakwatch";
    j["seed"] = prov.seed;
    if (prov.timestamps)
        j["written_at"] = now_utc();
    if (!prov.config_json.empty())
        j["config"] = nlohmann::json::parse(prov.config_json, nullptr, false);
    return j;
}

std::string opt_num(const std::optional<double>& v) {
    return v ? format_double(*v) : "";
}

} // namespace

std::vector<std::string> Provenance::lines() const {
    std::vector<std::string> out;
    out.push_back("tool: leakwatch");
    out.push_back("seed: " + std::to_string(seed));
    if (timestamps)
        out.push_back("written_at: " + now_utc());
    if (!config_json.empty())
        out.push_back("config: " + config_json);
    return out;
}

std::string Provenance::csv_header() const {
    std::string out;
    for (const auto& line : lines())
        out += "# " + line + "\n";
    return out;
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw RangeError("cannot create directory " + dir + ": " + ec.message());
}

void write_detection_report(const std::string& dir, const RunResult& result,
                            std::optional<Timestamp> leak_start, double slack,
                            double threshold, const Provenance& prov) {
    ensure_directory(dir);
    const auto& det = result.detection;

    // alarm log, CSV and JSON
    std::ostringstream alarms_csv;
    alarms_csv << prov.csv_header() << "time,series,statistic,slack,threshold\n";
    for (const auto& a : det.alarms)
        alarms_csv << format_timestamp(a.time) << ',' << a.series << ','
                   << format_double(a.statistic) << ',' << format_double(slack) << ','
                   << format_double(threshold) << "\n";
    write_text_file(dir + "/alarms.csv", alarms_csv.str());

    nlohmann::json j;
    j["provenance"] = provenance_json(prov);
    j["slack"] = slack;
    j["threshold"] = threshold;
    j["outcome"] = outcome_name(result.outcome.classification);
    j["variant"] = variant_name(result.outcome.variant);
    if (result.outcome.ttd) {
        j["ttd_s"] = *result.outcome.ttd;
        j["ttd_hours"] = static_cast<double>(*result.outcome.ttd) / 3600.0;
        j["ttd_days"] = static_cast<double>(*result.outcome.ttd) / 86400.0;
    }
    if (leak_start)
        j["leak_start"] = format_timestamp(*leak_start);
    nlohmann::json alarms = nlohmann::json::array();
    for (const auto& a : det.alarms)
        alarms.push_back({{"time", format_timestamp(a.time)},
                          {"series", a.series},
                          {"statistic", a.statistic}});
    j["alarms"] = std::move(alarms);
    nlohmann::json stats = nlohmann::json::array();
    for (std::size_t s = 0; s < det.stats.size(); ++s)
        stats.push_back({{"series", det.series_labels[s]},
                         {"mean", det.stats[s].mean},
                         {"std", det.stats[s].std},
                         {"raw_std", det.stats[s].raw_std}});
    j["standardization"] = std::move(stats);
    if (!result.demand_r2.empty())
        j["demand_recovery_r2"] = result.demand_r2;
    write_text_file(dir + "/report.json", j.dump(2));

    // long-format traces
    std::ostringstream traces;
    traces << prov.csv_header() << "time,series,mre,s_plus,s_minus\n";
    for (std::size_t s = 0; s < det.traces.size(); ++s) {
        const auto& trace = det.traces[s];
        for (Eigen::Index t = 0; t < trace.axis.length; ++t) {
            const double mre = det.series_labels[s] == "mean"
                                   ? result.eval_mre.reduced.col(t).mean()
                                   : result.eval_mre.reduced(static_cast<Eigen::Index>(s), t);
            traces << format_timestamp(trace.axis.at(t)) << ',' << det.series_labels[s] << ','
                   << format_double(mre) << ',' << format_double(trace.s_plus[t]) << ','
                   << format_double(trace.s_minus[t]) << "\n";
        }
    }
    write_text_file(dir + "/traces.csv", traces.str());

    // detection figure: error signal against the cusum statistic
    svg::LineChart chart;
    chart.title = "model reconstruction error and cusum statistic";
    chart.x_label = "days since evaluation start";
    chart.y_label = "MRE (m)";
    chart.y2_label = "cusum statistic";
    chart.comments = prov.lines();
    const auto& axis = result.eval_mre.axis;
    std::vector<double> days(static_cast<std::size_t>(axis.length));
    for (Eigen::Index t = 0; t < axis.length; ++t)
        days[static_cast<std::size_t>(t)] =
            static_cast<double>(axis.at(t) - axis.start) / 86400.0;
    std::vector<double> mean_mre(days.size()), stat(days.size());
    for (Eigen::Index t = 0; t < axis.length; ++t) {
        mean_mre[static_cast<std::size_t>(t)] = result.eval_mre.reduced.col(t).mean();
        double m = 0.0;
        for (const auto& trace : det.traces)
            m = std::max({m, trace.s_plus[t], trace.s_minus[t]});
        stat[static_cast<std::size_t>(t)] = m;
    }
    chart.add("MRE (mean over pairs)", days, mean_mre);
    chart.add("max cusum statistic", days, stat, true);
    if (leak_start && *leak_start >= axis.start)
        chart.x_marks.push_back(static_cast<double>(*leak_start - axis.start) / 86400.0);
    if (auto alarm = det.first_alarm())
        chart.x_marks.push_back(static_cast<double>(alarm->time - axis.start) / 86400.0);
    write_text_file(dir + "/detection.svg", chart.render());
}

void write_model_files(const std::string& dir, const TrainedModel& model,
                       const Provenance& prov) {
    ensure_directory(dir);
    write_text_file(dir + "/model.json", model.to_json());

    std::ostringstream folds;
    folds << prov.csv_header() << "fold,epoch,train_loss,val_loss\n";
    for (const auto& fr : model.fold_reports)
        for (std::size_t e = 0; e < fr.train_loss.size(); ++e)
            folds << fr.fold << ',' << e << ',' << format_double(fr.train_loss[e]) << ','
                  << format_double(fr.val_loss[e]) << "\n";
    write_text_file(dir + "/folds.csv", folds.str());

    svg::LineChart chart;
    chart.title = "cross-validation loss";
    chart.x_label = "epoch";
    chart.y_label = "loss";
    chart.comments = prov.lines();
    for (const auto& fr : model.fold_reports) {
        std::vector<double> x(fr.val_loss.size());
        for (std::size_t e = 0; e < x.size(); ++e)
            x[e] = static_cast<double>(e);
        chart.add("fold " + std::to_string(fr.fold) + " val", x, fr.val_loss);
    }
    write_text_file(dir + "/folds.svg", chart.render());
}

void write_coeffs_file(const std::string& dir, const CoefficientSet& coeffs) {
    ensure_directory(dir);
    write_text_file(dir + "/coeffs.json", coeffs.to_json());
}

void write_uq_report(const std::string& dir, const UqReport& report, const Provenance& prov) {
    ensure_directory(dir);

    std::ostringstream outcomes;
    outcomes << prov.csv_header()
             << "run,seed,variant,classification,ttd_s,ttd_hours,ttd_days\n";
    for (std::size_t r = 0; r < report.outcomes.size(); ++r) {
        const auto& o = report.outcomes[r];
        outcomes << r << ',' << o.seed << ',' << variant_name(o.variant) << ','
                 << outcome_name(o.classification) << ',';
        if (o.ttd)
            outcomes << *o.ttd << ',' << format_double(static_cast<double>(*o.ttd) / 3600.0)
                     << ',' << format_double(static_cast<double>(*o.ttd) / 86400.0);
        else
            outcomes << ",,";
        outcomes << "\n";
    }
    write_text_file(dir + "/uq_outcomes.csv", outcomes.str());

    nlohmann::json j;
    j["provenance"] = provenance_json(prov);
    j["runs"] = report.outcomes.size();
    j["tp"] = report.tp;
    j["fp"] = report.fp;
    j["fn"] = report.fn;
    j["clean"] = report.clean;
    j["precision"] = report.metrics.precision ? nlohmann::json(*report.metrics.precision)
                                              : nlohmann::json(nullptr);
    j["recall"] =
        report.metrics.recall ? nlohmann::json(*report.metrics.recall) : nlohmann::json(nullptr);
    j["f1"] = report.metrics.f1 ? nlohmann::json(*report.metrics.f1) : nlohmann::json(nullptr);
    if (report.ttd.count > 0)
        j["ttd"] = {{"count", report.ttd.count}, {"min_s", report.ttd.min},
                    {"q1_s", report.ttd.q1},     {"median_s", report.ttd.median},
                    {"mean_s", report.ttd.mean}, {"q3_s", report.ttd.q3},
                    {"max_s", report.ttd.max}};
    write_text_file(dir + "/uq_metrics.json", j.dump(2));

    // TTD distribution over correct detections
    std::vector<double> ttds;
    for (const auto& o : report.outcomes)
        if (o.ttd)
            ttds.push_back(static_cast<double>(*o.ttd) / 3600.0);
    std::sort(ttds.begin(), ttds.end());
    std::ostringstream dist;
    dist << prov.csv_header() << "rank,ttd_hours\n";
    for (std::size_t i = 0; i < ttds.size(); ++i)
        dist << i << ',' << format_double(ttds[i]) << "\n";
    write_text_file(dir + "/ttd_distribution.csv", dist.str());

    svg::LineChart chart;
    chart.title = "TTD distribution over correct detections";
    chart.x_label = "run rank";
    chart.y_label = "TTD (hours)";
    chart.comments = prov.lines();
    std::vector<double> x(ttds.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = static_cast<double>(i);
    if (!ttds.empty())
        chart.add("ttd", x, ttds);
    write_text_file(dir + "/ttd_distribution.svg", chart.render());
}

void write_sweep_report(const std::string& dir, const std::vector<SweepCell>& cells,
                        const Provenance& prov) {
    ensure_directory(dir);

    std::ostringstream csv;
    csv << prov.csv_header()
        << "slack,threshold,tp,fp,fn,f1,avg_ttd_s,avg_ttd_hours,pareto\n";
    for (const auto& c : cells) {
        csv << format_double(c.slack) << ',' << format_double(c.threshold) << ',' << c.tp << ','
            << c.fp << ',' << c.fn << ',' << opt_num(c.f1) << ',' << opt_num(c.avg_ttd) << ','
            << (c.avg_ttd ? format_double(*c.avg_ttd / 3600.0) : "") << ','
            << (c.pareto ? "*" : "") << "\n";
    }
    write_text_file(dir + "/sweep.csv", csv.str());

    std::ostringstream pareto;
    pareto << prov.csv_header() << "slack,threshold,f1,avg_ttd_hours\n";
    for (const auto& c : cells)
        if (c.pareto)
            pareto << format_double(c.slack) << ',' << format_double(c.threshold) << ','
                   << opt_num(c.f1) << ','
                   << (c.avg_ttd ? format_double(*c.avg_ttd / 3600.0) : "") << "\n";
    write_text_file(dir + "/pareto.csv", pareto.str());

    // grid axes
    std::vector<double> slacks, thresholds;
    for (const auto& c : cells) {
        if (slacks.empty() || slacks.back() != c.slack)
            if (std::find(slacks.begin(), slacks.end(), c.slack) == slacks.end())
                slacks.push_back(c.slack);
        if (std::find(thresholds.begin(), thresholds.end(), c.threshold) == thresholds.end())
            thresholds.push_back(c.threshold);
    }
    std::sort(slacks.begin(), slacks.end());
    std::sort(thresholds.begin(), thresholds.end());

    auto grid = [&](auto getter, const std::string& name, const std::string& fmt) {
        Eigen::MatrixXd values(static_cast<Eigen::Index>(slacks.size()),
                               static_cast<Eigen::Index>(thresholds.size()));
        values.setConstant(std::numeric_limits<double>::quiet_NaN());
        for (const auto& c : cells) {
            const auto r = std::find(slacks.begin(), slacks.end(), c.slack) - slacks.begin();
            const auto col =
                std::find(thresholds.begin(), thresholds.end(), c.threshold) -
                thresholds.begin();
            if (auto v = getter(c))
                values(r, col) = *v;
        }
        svg::Heatmap map;
        map.title = name;
        map.x_label = "threshold (epsilon)";
        map.y_label = "slack (delta)";
        map.x_ticks = thresholds;
        map.y_ticks = slacks;
        map.values = values;
        map.cell_format = fmt;
        map.comments = prov.lines();
        return map.render();
    };
    write_text_file(dir + "/sweep_f1.svg",
                    grid([](const SweepCell& c) { return c.f1; }, "F1-score", "%.3f"));
    write_text_file(dir + "/sweep_ttd.svg",
                    grid(
                        [](const SweepCell& c) -> std::optional<double> {
                            if (!c.avg_ttd)
                                return std::nullopt;
                            return *c.avg_ttd / 3600.0;
                        },
                        "average TTD (hours)", "%.1f"));
}

void write_scenario_files(const std::string& dir, const ScenarioSpec& spec,
                          const ScenarioTruth& truth, const Provenance& prov) {
    ensure_directory(dir);
    write_panel(truth.panel, dir + "/panel.csv");
    write_text_file(dir + "/spec.json", spec.to_json());

    std::ostringstream tcsv;
    tcsv << "Timestamp";
    for (const auto& id : truth.demand_ids)
        tcsv << ',' << id;
    tcsv << ",leak_flow\n";
    for (Eigen::Index t = 0; t < truth.panel.axis.length; ++t) {
        tcsv << format_timestamp(truth.panel.axis.at(t));
        for (Eigen::Index d = 0; d < truth.irregular_demands.rows(); ++d)
            tcsv << ',' << format_double(truth.irregular_demands(d, t));
        tcsv << ',' << format_double(truth.leak_flow[t]) << "\n";
    }
    write_text_file(dir + "/truth.csv", tcsv.str());

    nlohmann::json meta;
    meta["provenance"] = provenance_json(prov);
    meta["sensor_ids"] = truth.panel.sensor_ids;
    meta["demand_ids"] = truth.demand_ids;
    meta["known_demand_count"] = truth.known_count;
    if (truth.leak_start)
        meta["leak_start"] = format_timestamp(*truth.leak_start);
    meta["leak_couplings"] =
        std::vector<double>(truth.leak_couplings.data(),
                            truth.leak_couplings.data() + truth.leak_couplings.size());
    meta["train_window"] = {{"start", format_timestamp(reference_train_window(spec).start)},
                            {"end", format_timestamp(reference_train_window(spec).end)}};
    meta["eval_window"] = {{"start", format_timestamp(reference_eval_window(spec).start)},
                           {"end", format_timestamp(reference_eval_window(spec).end)}};
    meta["coefficients"] = nlohmann::json::parse(truth.coeffs.to_json());
    meta["notes"] = truth.notes;
    write_text_file(dir + "/meta.json", meta.dump(2));
}

std::string summarize_directory(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ostringstream md;
    md << "# leakwatch run summary\n\n";
    if (!fs::exists(dir))
        throw RangeError("no such directory: " + dir);

    std::vector<fs::path> json_files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            json_files.push_back(entry.path());
    std::sort(json_files.begin(), json_files.end());

    for (const auto& path : json_files) {
        nlohmann::json j = nlohmann::json::parse(read_text_file(path.string()), nullptr, false);
        if (j.is_discarded())
            continue;
        md << "## " << fs::relative(path, dir).string() << "\n\n";
        if (path.filename() == "report.json") {
            md << "- outcome: " << j.value("outcome", "?") << "\n";
            if (j.contains("ttd_hours"))
                md << "- TTD: " << j["ttd_hours"].get<double>() << " h\n";
            md << "- alarms: " << j.value("alarms", nlohmann::json::array()).size() << "\n";
        } else if (path.filename() == "uq_metrics.json") {
            md << "- runs: " << j.value("runs", 0) << " (TP " << j.value("tp", 0) << ", FP "
               << j.value("fp", 0) << ", FN " << j.value("fn", 0) << ")\n";
            if (j.contains("f1") && !j["f1"].is_null())
                md << "- F1: " << j["f1"].get<double>() << "\n";
        } else if (path.filename() == "meta.json") {
            if (j.contains("leak_start"))
                md << "- leak start: " << j["leak_start"].get<std::string>() << "\n";
        } else {
            md << "- keys: ";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first)
                    md << ", ";
                md << it.key();
                first = false;
            }
            md << "\n";
        }
        md << "\n";
    }

    std::vector<std::string> svgs;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".svg")
            svgs.push_back(fs::relative(entry.path(), dir).string());
    std::sort(svgs.begin(), svgs.end());
    if (!svgs.empty()) {
        md << "## figures\n\n";
        for (const auto& s : svgs)
            md << "![" << s << "](" << s << ")\n";
    }
    return md.str();
}

} // namespace leakwatch
