#include "leakwatch/panel.hpp"

#include "leakwatch/csv.hpp"
#include "leakwatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace leakwatch {

Eigen::Index PressurePanel::sensor_index(const std::string& id) const {
    auto it = std::find(sensor_ids.begin(), sensor_ids.end(), id);
    if (it == sensor_ids.end())
        throw ContractError("unknown sensor id: " + id);
    return static_cast<Eigen::Index>(it - sensor_ids.begin());
}

PressurePanel load_pressure_panel(const std::string& path, const PanelSchema& schema) {
    CsvTable table = read_csv(path, schema.delimiter);

    std::size_t ts_col = table.header.size();
    for (std::size_t c = 0; c < table.header.size(); ++c)
        if (table.header[c] == schema.timestamp_column)
            ts_col = c;
    if (ts_col == table.header.size())
        throw ParseError(path + ": no timestamp column '" + schema.timestamp_column + "'");

    // Sensor order: explicit schema entries first (in declaration order), then
    // remaining file columns left to right.
    std::vector<std::size_t> pressure_cols, demand_cols;
    std::vector<bool> claimed(table.header.size(), false);
    for (const auto& [name, role] : schema.columns) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end())
            throw ParseError(path + ": schema column '" + name + "' not in file");
        std::size_t c = static_cast<std::size_t>(it - table.header.begin());
        if (c == ts_col)
            throw ConfigError("schema assigns a role to the timestamp column");
        claimed[c] = true;
        if (role == ColumnRole::pressure)
            pressure_cols.push_back(c);
        else if (role == ColumnRole::known_demand)
            demand_cols.push_back(c);
    }
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == ts_col || claimed[c])
            continue;
        if (schema.default_role == ColumnRole::pressure)
            pressure_cols.push_back(c);
        else if (schema.default_role == ColumnRole::known_demand)
            demand_cols.push_back(c);
    }
    if (pressure_cols.size() < 2)
        throw ConfigError(path + ": pairwise model needs at least 2 pressure columns, got " +
                          std::to_string(pressure_cols.size()));
    if (table.rows.empty())
        throw ParseError(path + ": no data rows");

    const std::size_t raw_rows = table.rows.size();
    std::vector<Timestamp> stamps(raw_rows);
    for (std::size_t r = 0; r < raw_rows; ++r)
        stamps[r] = parse_timestamp(table.rows[r][ts_col], schema.tz_offset_min);

    TimeAxis axis;
    axis.start = stamps[0];
    if (raw_rows >= 2) {
        axis.step = stamps[1] - stamps[0];
        if (axis.step <= 0)
            throw AlignmentError(path + ":3: timestamps not strictly increasing");
    }

    // Map every raw row onto the uniform grid; gaps are whole missing rows.
    std::vector<std::int64_t> grid_index(raw_rows);
    for (std::size_t r = 0; r < raw_rows; ++r) {
        Timestamp t = stamps[r];
        std::int64_t off = t - axis.start;
        if (off % axis.step != 0)
            throw AlignmentError(path + ":" + std::to_string(r + 2) +
                                 ": timestamp off the " + std::to_string(axis.step) +
                                 " s grid");
        grid_index[r] = off / axis.step;
        if (r > 0) {
            if (grid_index[r] == grid_index[r - 1])
                throw AlignmentError(path + ":" + std::to_string(r + 2) +
                                     ": duplicated timestamp");
            if (grid_index[r] < grid_index[r - 1])
                throw AlignmentError(path + ":" + std::to_string(r + 2) +
                                     ": timestamps not increasing");
        }
    }
    axis.length = grid_index.back() + 1;

    PressurePanel panel;
    panel.axis = axis;
    for (std::size_t c : pressure_cols)
        panel.sensor_ids.push_back(table.header[c]);
    const Eigen::Index n = static_cast<Eigen::Index>(pressure_cols.size());
    panel.values.resize(n, axis.length);
    for (std::size_t c : demand_cols)
        panel.known_demands.push_back({table.header[c], Eigen::VectorXd(axis.length)});

    auto cell_value = [&](const std::string& cell, std::size_t r, std::size_t c,
                          std::int64_t gi, double prev) {
        const std::string where = path + ":" + std::to_string(r + 2) + " column '" +
                                  table.header[c] + "'";
        if (cell.empty()) {
            if (schema.gap_policy == GapPolicy::strict || gi == 0)
                throw GapError(where + ": missing value");
            ++panel.gap_filled;
            return prev;
        }
        double v = parse_double(cell, where);
        if (!std::isfinite(v))
            throw NumericError(where + ": non-finite value");
        return v;
    };

    std::int64_t prev_gi = -1;
    for (std::size_t r = 0; r < raw_rows; ++r) {
        const std::int64_t gi = grid_index[r];
        if (gi != prev_gi + 1) {
            // whole rows missing between prev_gi and gi
            const std::int64_t missing = gi - prev_gi - 1;
            if (schema.gap_policy == GapPolicy::strict)
                throw GapError(path + ":" + std::to_string(r + 2) + ": " +
                               std::to_string(missing) + " missing sample(s) before " +
                               format_timestamp(stamps[r]));
            for (std::int64_t g = prev_gi + 1; g < gi; ++g) {
                panel.values.col(g) = panel.values.col(g - 1);
                for (auto& ch : panel.known_demands)
                    ch.flow[g] = ch.flow[g - 1];
                panel.gap_filled += n + static_cast<std::int64_t>(panel.known_demands.size());
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const std::size_t c = pressure_cols[static_cast<std::size_t>(i)];
            panel.values(i, gi) = cell_value(table.rows[r][c], r, c, gi,
                                             gi > 0 ? panel.values(i, gi - 1) : 0.0);
        }
        for (std::size_t k = 0; k < demand_cols.size(); ++k) {
            auto& flow = panel.known_demands[k].flow;
            flow[gi] = cell_value(table.rows[r][demand_cols[k]], r, demand_cols[k], gi,
                                  gi > 0 ? flow[gi - 1] : 0.0);
        }
        prev_gi = gi;
    }
    return panel;
}

void write_panel(const PressurePanel& panel, const std::string& path, char delimiter) {
    std::ostringstream out;
    out << "Timestamp";
    for (const auto& id : panel.sensor_ids)
        out << delimiter << id;
    for (const auto& ch : panel.known_demands)
        out << delimiter << ch.id;
    out << "\n";
    for (std::int64_t t = 0; t < panel.axis.length; ++t) {
        out << format_timestamp(panel.axis.at(t));
        for (Eigen::Index i = 0; i < panel.sensor_count(); ++i)
            out << delimiter << format_double(panel.values(i, t));
        for (const auto& ch : panel.known_demands)
            out << delimiter << format_double(ch.flow[t]);
        out << "\n";
    }
    write_text_file(path, out.str());
}

PressurePanel slice_window(const PressurePanel& panel, Timestamp start, Timestamp end) {
    if (start >= end)
        throw RangeError("empty window: start " + format_timestamp(start) +
                         " not before end " + format_timestamp(end));
    const std::int64_t i0 = panel.axis.index_of(start);
    const std::int64_t i1 = panel.axis.index_of(end); // end may equal axis.end()
    if (i1 <= i0)
        throw RangeError("window selects no samples");

    PressurePanel out;
    out.axis = TimeAxis{start, panel.axis.step, i1 - i0};
    out.sensor_ids = panel.sensor_ids;
    out.values = panel.values.middleCols(i0, i1 - i0);
    for (const auto& ch : panel.known_demands)
        out.known_demands.push_back({ch.id, ch.flow.segment(i0, i1 - i0)});
    return out;
}

std::pair<Eigen::VectorXd, ScaleRecord> max_abs_scale(const Eigen::VectorXd& series) {
    if (!series.allFinite())
        throw NumericError("max_abs_scale: non-finite input");
    double m = series.size() > 0 ? series.cwiseAbs().maxCoeff() : 0.0;
    if (m == 0.0)
        m = 1.0; // all-zero input stays all-zero; sentinel keeps unscaling exact
    ScaleRecord record;
    record.per_channel_max_abs = Eigen::VectorXd::Constant(1, m);
    return {series / m, record};
}

Eigen::VectorXd max_abs_unscale(const Eigen::VectorXd& scaled, const ScaleRecord& record) {
    if (record.per_channel_max_abs.size() != 1 || record.per_channel_max_abs[0] <= 0.0)
        throw ContractError("max_abs_unscale: bad scale record");
    return scaled * record.per_channel_max_abs[0];
}

} // namespace leakwatch
