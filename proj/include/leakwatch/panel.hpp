#pragma once

#include "leakwatch/time_axis.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace leakwatch {

enum class ColumnRole { pressure, known_demand, ignore };
enum class GapPolicy { strict, ffill };

// Column mapping for a delimiter-separated pressure file. Columns listed in
// `columns` get explicit roles (and fix the sensor order); everything else
// falls back to default_role.
struct PanelSchema {
    std::string timestamp_column = "Timestamp";
    char delimiter = ',';
    std::vector<std::pair<std::string, ColumnRole>> columns;
    ColumnRole default_role = ColumnRole::pressure;
    GapPolicy gap_policy = GapPolicy::strict;
    int tz_offset_min = 0; // declared input timezone; stored timestamps are UTC
};

struct DemandChannel {
    std::string id;
    Eigen::VectorXd flow; // m^3/h, length T
};

// Aligned multivariate pressure series (meters head) plus any measured
// irregular-demand channels. Immutable after construction; safe to share.
struct PressurePanel {
    TimeAxis axis;
    std::vector<std::string> sensor_ids; // size N >= 2
    Eigen::MatrixXd values;              // N x T
    std::vector<DemandChannel> known_demands;
    std::int64_t gap_filled = 0; // samples synthesized under the ffill policy

    Eigen::Index sensor_count() const { return values.rows(); }
    Eigen::Index sample_count() const { return values.cols(); }
    Eigen::Index sensor_index(const std::string& id) const;
};

struct ScaleRecord {
    Eigen::VectorXd per_channel_max_abs; // positive; 1.0 sentinel for all-zero input
};

PressurePanel load_pressure_panel(const std::string& path, const PanelSchema& schema);

// CSV layout the loader reads back bit-exactly: ISO-8601 timestamps, shortest
// round-trip doubles, demand channels as extra columns.
void write_panel(const PressurePanel& panel, const std::string& path, char delimiter = ',');

// Copies [start, end); both bounds must sit on the sampling grid.
PressurePanel slice_window(const PressurePanel& panel, Timestamp start, Timestamp end);

std::pair<Eigen::VectorXd, ScaleRecord> max_abs_scale(const Eigen::VectorXd& series);
Eigen::VectorXd max_abs_unscale(const Eigen::VectorXd& scaled, const ScaleRecord& record);

} // namespace leakwatch
