#include "leakwatch/config.hpp"

#include "leakwatch/csv.hpp"
#include "leakwatch/errors.hpp"

#include <json.hpp>

#include <algorithm>

namespace leakwatch {

namespace {

TimeWindow window_from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.contains("start") || !j.contains("end"))
        throw ConfigError(what + ": window needs start and end");
    TimeWindow w;
    w.start = parse_timestamp(j["start"].get<std::string>());
    w.end = parse_timestamp(j["end"].get<std::string>());
    return w;
}

ColumnRole role_from_name(const std::string& role, const std::string& column) {
    if (role == "pressure")
        return ColumnRole::pressure;
    if (role == "known_demand")
        return ColumnRole::known_demand;
    if (role == "ignore")
        return ColumnRole::ignore;
    throw ConfigError("schema: unknown role '" + role + "' for column '" + column + "'");
}

PanelSchema schema_from_json(const nlohmann::json& j) {
    PanelSchema schema;
    schema.timestamp_column = j.value("timestamp_column", schema.timestamp_column);
    const std::string delim = j.value("delimiter", std::string(1, schema.delimiter));
    if (delim.size() != 1)
        throw ConfigError("schema: delimiter must be one character");
    schema.delimiter = delim[0];
    if (j.contains("columns")) {
        if (!j["columns"].is_array())
            throw ConfigError("schema: columns must be an array of {name, role}");
        for (const auto& c : j["columns"]) {
            const auto name = c.at("name").get<std::string>();
            schema.columns.emplace_back(name, role_from_name(c.at("role").get<std::string>(), name));
        }
    }
    if (j.contains("default_role"))
        schema.default_role = role_from_name(j["default_role"].get<std::string>(), "(default)");
    const std::string gap = j.value("gap_policy", "strict");
    if (gap == "strict")
        schema.gap_policy = GapPolicy::strict;
    else if (gap == "ffill")
        schema.gap_policy = GapPolicy::ffill;
    else
        throw ConfigError("schema: unknown gap policy '" + gap + "'");
    schema.tz_offset_min = j.value("tz_offset_min", 0);
    return schema;
}

} // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text,
                                              const std::string& context) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(context + ": " + e.what());
    }

    PipelineConfig cfg;
    try {
        if (j.contains("data")) {
            const auto& d = j["data"];
            if (d.contains("scenario"))
                cfg.scenario = ScenarioSpec::from_json(d["scenario"].dump());
            if (d.contains("scenario_file"))
                cfg.scenario_file = d["scenario_file"].get<std::string>();
            if (d.contains("panel_csv"))
                cfg.panel_csv = d["panel_csv"].get<std::string>();
            if (d.contains("schema"))
                cfg.schema = schema_from_json(d["schema"]);
            if (d.contains("truth_csv"))
                cfg.truth_csv = d["truth_csv"].get<std::string>();
            if (d.contains("meta_json"))
                cfg.meta_json = d["meta_json"].get<std::string>();
        }
        if (j.contains("train_window"))
            cfg.train_window = window_from_json(j["train_window"], "train_window");
        if (j.contains("eval_window"))
            cfg.eval_window = window_from_json(j["eval_window"], "eval_window");
        if (j.contains("variant"))
            cfg.variant = variant_from_name(j["variant"].get<std::string>());

        if (j.contains("detection")) {
            const auto& d = j["detection"];
            cfg.run.slack = d.value("slack", cfg.run.slack);
            cfg.run.threshold = d.value("threshold", cfg.run.threshold);
            cfg.run.min_std = d.value("min_std", cfg.run.min_std);
            const std::string mode = d.value("mode", "per_pair");
            if (mode == "per_pair")
                cfg.run.mode = DetectionMode::per_pair;
            else if (mode == "mean")
                cfg.run.mode = DetectionMode::mean;
            else
                throw ConfigError("detection: unknown mode '" + mode + "'");
        }
        if (j.contains("net")) {
            const auto& n = j["net"];
            NetConfig& net = cfg.run.net;
            net.hidden_layers = n.value("hidden_layers", net.hidden_layers);
            net.hidden_size = n.value("hidden_size", net.hidden_size);
            net.unknown_channels = n.value("unknown_channels", net.unknown_channels);
            net.leaky_slope = n.value("leaky_slope", net.leaky_slope);
            net.batch_norm = n.value("batch_norm", net.batch_norm);
            net.bn_momentum = n.value("bn_momentum", net.bn_momentum);
            net.feed_known_demands = n.value("feed_known_demands", net.feed_known_demands);
            net.learning_rate = n.value("learning_rate", net.learning_rate);
            net.batch_size = n.value("batch_size", net.batch_size);
            net.epochs = n.value("epochs", net.epochs);
            net.patience = n.value("patience", net.patience);
            net.folds = n.value("folds", net.folds);
            net.nonnegative_kd = n.value("nonnegative_kd", net.nonnegative_kd);
            net.sparsity_weight = n.value("sparsity_weight", net.sparsity_weight);
        }
        cfg.run.gauge_sensor = j.value("gauge_sensor", cfg.run.gauge_sensor);

        if (j.contains("sweep")) {
            const auto& s = j["sweep"];
            if (s.contains("slack_grid"))
                cfg.slack_grid = s["slack_grid"].get<std::vector<double>>();
            if (s.contains("threshold_grid"))
                cfg.threshold_grid = s["threshold_grid"].get<std::vector<double>>();
        }
        if (j.contains("uq")) {
            cfg.uq_runs = j["uq"].value("runs", cfg.uq_runs);
            cfg.base_seed = j["uq"].value("base_seed", cfg.base_seed);
        }
        cfg.seed = j.value("seed", cfg.seed);
        cfg.jobs = j.value("jobs", cfg.jobs);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(context + ": " + e.what());
    }
    return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path), path);
}

std::string PipelineConfig::effective_json() const {
    nlohmann::json j;
    j["variant"] = variant_name(variant);
    j["detection"] = {{"slack", run.slack},
                      {"threshold", run.threshold},
                      {"mode", run.mode == DetectionMode::per_pair ? "per_pair" : "mean"},
                      {"min_std", run.min_std}};
    j["net"] = {{"hidden_layers", run.net.hidden_layers},
                {"hidden_size", run.net.hidden_size},
                {"unknown_channels", run.net.unknown_channels},
                {"learning_rate", run.net.learning_rate},
                {"batch_size", run.net.batch_size},
                {"epochs", run.net.epochs},
                {"patience", run.net.patience},
                {"folds", run.net.folds},
                {"feed_known_demands", run.net.feed_known_demands}};
    j["gauge_sensor"] = run.gauge_sensor;
    j["seed"] = seed;
    j["jobs"] = jobs;
    if (scenario)
        j["data"] = {{"scenario_seed", scenario->seed}};
    else if (panel_csv)
        j["data"] = {{"panel_csv", *panel_csv}};
    j["train_window"] = {{"start", format_timestamp(run.train_window.start)},
                         {"end", format_timestamp(run.train_window.end)}};
    j["eval_window"] = {{"start", format_timestamp(run.eval_window.start)},
                        {"end", format_timestamp(run.eval_window.end)}};
    return j.dump();
}

LoadedData load_pipeline_data(PipelineConfig& config) {
    LoadedData loaded;

    if (config.scenario_file && !config.scenario)
        config.scenario = ScenarioSpec::from_json(read_text_file(*config.scenario_file));

    if (config.scenario) {
        ScenarioTruth truth = generate(*config.scenario);
        loaded.data = scenario_data(truth);
        loaded.train_window = reference_train_window(*config.scenario);
        loaded.eval_window = reference_eval_window(*config.scenario);
        if (!config.train_window && !config.eval_window &&
            config.scenario->samples * config.scenario->step <= 14ll * 86400)
            throw ConfigError("scenario too short for the default two-week training split; "
                              "set train_window/eval_window explicitly");
    } else if (config.panel_csv) {
        loaded.data.panel = load_pressure_panel(*config.panel_csv, config.schema);
        if (config.truth_csv) {
            const CsvTable t = read_csv(*config.truth_csv, ',');
            std::size_t ts_col = 0;
            std::vector<std::size_t> flow_cols;
            for (std::size_t c = 0; c < t.header.size(); ++c) {
                if (t.header[c] == "Timestamp")
                    ts_col = c;
                else
                    flow_cols.push_back(c);
            }
            const TimeAxis& axis = loaded.data.panel.axis;
            if (static_cast<std::int64_t>(t.rows.size()) != axis.length)
                throw AlignmentError(*config.truth_csv + ": truth rows do not match panel");
            Eigen::MatrixXd flows(static_cast<Eigen::Index>(flow_cols.size()), axis.length);
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                if (parse_timestamp(t.rows[r][ts_col]) !=
                    axis.at(static_cast<std::int64_t>(r)))
                    throw AlignmentError(*config.truth_csv + ":" + std::to_string(r + 2) +
                                         ": timestamp differs from panel grid");
                for (std::size_t c = 0; c < flow_cols.size(); ++c)
                    flows(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) =
                        parse_double(t.rows[r][flow_cols[c]],
                                     *config.truth_csv + ":" + std::to_string(r + 2));
            }
            // a trailing leak_flow column is the leak, not a demand channel
            std::vector<std::string> ids;
            for (std::size_t c : flow_cols)
                ids.push_back(t.header[c]);
            Eigen::Index keep = flows.rows();
            if (!ids.empty() && ids.back() == "leak_flow")
                --keep;
            loaded.data.unknown_truth = flows.topRows(keep);
            loaded.data.unknown_ids.assign(ids.begin(), ids.begin() + keep);
        }
        if (config.meta_json) {
            nlohmann::json meta =
                nlohmann::json::parse(read_text_file(*config.meta_json), nullptr, false);
            if (meta.is_discarded())
                throw ParseError(*config.meta_json + ": not valid JSON");
            if (meta.contains("leak_start"))
                loaded.data.leak_start =
                    parse_timestamp(meta["leak_start"].get<std::string>());
            if (meta.contains("train_window"))
                loaded.train_window = window_from_json(meta["train_window"], "meta train_window");
            if (meta.contains("eval_window"))
                loaded.eval_window = window_from_json(meta["eval_window"], "meta eval_window");
        }
    } else {
        throw ConfigError("config: no data source (scenario, scenario_file or panel_csv)");
    }

    if (config.train_window)
        loaded.train_window = *config.train_window;
    if (config.eval_window)
        loaded.eval_window = *config.eval_window;
    if (loaded.train_window.start == loaded.train_window.end)
        throw ConfigError("config: no training window available");

    config.run.train_window = loaded.train_window;
    config.run.eval_window = loaded.eval_window;

    // net output width follows the data unless pinned in the config
    if (config.run.net.unknown_channels == 0 && loaded.data.unknown_truth)
        config.run.net.unknown_channels =
            static_cast<int>(loaded.data.unknown_truth->rows());
    if (config.variant == Variant::pinn && config.run.net.unknown_channels < 1)
        throw ConfigError("config: net.unknown_channels must be set (no truth channel count "
                          "available to derive it from)");

    return loaded;
}

} // namespace leakwatch
