#include "leakwatch/csv.hpp"

#include "leakwatch/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace leakwatch {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> cells;
    std::size_t begin = 0;
    while (true) {
        std::size_t end = line.find(delimiter, begin);
        if (end == std::string::npos) {
            cells.push_back(line.substr(begin));
            break;
        }
        cells.push_back(line.substr(begin, end - begin));
        begin = end + 1;
    }
    return cells;
}

} // namespace

CsvTable read_csv(const std::string& path, char delimiter) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw RangeError("cannot open file: " + path);

    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = split_line(line, delimiter);
        if (lineno == 1) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size())
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(table.header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty())
        throw ParseError(path + ": empty file");
    return table;
}

double parse_double(const std::string& cell, const std::string& context) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    while (first != last && (*first == ' ' || *first == '\t'))
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    while (ptr != last && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r'))
        ++ptr;
    if (ec != std::errc{} || ptr != last)
        throw ParseError(context + ": not a number: '" + cell + "'");
    return value;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw RangeError("cannot write file: " + path);
    out << content;
    if (!out)
        throw RangeError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw RangeError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace leakwatch
