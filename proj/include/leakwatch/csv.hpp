#pragma once

#include <string>
#include <vector>

namespace leakwatch {

// Plain delimiter-separated table, no quoting (SCADA exports do not quote).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path, char delimiter);

// Locale-independent; used everywhere numbers cross a file boundary.
double parse_double(const std::string& cell, const std::string& context);

// Shortest representation that round-trips the exact double.
std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace leakwatch
