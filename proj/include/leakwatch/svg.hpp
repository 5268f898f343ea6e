#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace leakwatch::svg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::string color;
    bool right_axis = false;
    bool dashed = false;
};

// Self-contained line chart with an optional secondary y-axis (detection
// figures pair the error signal with the cusum statistic).
struct LineChart {
    std::string title, x_label, y_label, y2_label;
    std::vector<Series> series;
    std::vector<double> x_marks; // vertical reference lines (leak start, alarm)
    std::vector<std::string> comments;
    int width = 900, height = 420;

    void add(std::string name, std::vector<double> x, std::vector<double> y,
             bool right_axis = false, bool dashed = false);
    std::string render() const;
};

struct Heatmap {
    std::string title, x_label, y_label;
    std::vector<double> x_ticks, y_ticks; // column/row coordinates
    Eigen::MatrixXd values;               // y_ticks.size() rows x x_ticks.size() cols
    std::vector<std::string> comments;
    std::string cell_format = "%.3g";
    int width = 760, height = 520;

    std::string render() const;
};

// 1-2-5 tick spacing covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 6);

} // namespace leakwatch::svg
