#include "leakwatch/time_axis.hpp"

#include "leakwatch/errors.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace leakwatch {

namespace {

// Howard Hinnant's days-from-civil; branch-free and valid far beyond any
// SCADA horizon.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

int parse_int(const char* first, const char* last, const std::string& full) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw ParseError("bad timestamp: '" + full + "'");
    return value;
}

} // namespace

Timestamp parse_timestamp(const std::string& text, int tz_offset_min) {
    // Minimum shape: YYYY-MM-DD HH:MM
    if (text.size() < 16 || text[4] != '-' || text[7] != '-' ||
        (text[10] != ' ' && text[10] != 'T') || text[13] != ':')
        throw ParseError("bad timestamp: '" + text + "'");

    const char* s = text.data();
    int year = parse_int(s, s + 4, text);
    int month = parse_int(s + 5, s + 7, text);
    int day = parse_int(s + 8, s + 10, text);
    int hour = parse_int(s + 11, s + 13, text);
    int minute = parse_int(s + 14, s + 16, text);
    int second = 0;

    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        if (text.size() < pos + 3)
            throw ParseError("bad timestamp: '" + text + "'");
        second = parse_int(s + pos + 1, s + pos + 3, text);
        pos += 3;
    }

    int offset_min = tz_offset_min;
    if (pos < text.size()) {
        if (text[pos] == 'Z' && pos + 1 == text.size()) {
            offset_min = 0;
        } else if ((text[pos] == '+' || text[pos] == '-') && text.size() == pos + 6 &&
                   text[pos + 3] == ':') {
            int oh = parse_int(s + pos + 1, s + pos + 3, text);
            int om = parse_int(s + pos + 4, s + pos + 6, text);
            offset_min = (text[pos] == '+' ? 1 : -1) * (oh * 60 + om);
        } else {
            throw ParseError("bad timestamp: '" + text + "'");
        }
    }

    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 ||
        second > 60)
        throw ParseError("bad timestamp: '" + text + "'");

    std::int64_t days = days_from_civil(year, static_cast<unsigned>(month),
                                        static_cast<unsigned>(day));
    return days * 86400 + hour * 3600 + minute * 60 + second -
           static_cast<std::int64_t>(offset_min) * 60;
}

std::string format_timestamp(Timestamp t) {
    std::int64_t days = t / 86400;
    std::int64_t sod = t % 86400;
    if (sod < 0) {
        sod += 86400;
        --days;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(y), m, d,
                  static_cast<long long>(sod / 3600),
                  static_cast<long long>((sod / 60) % 60),
                  static_cast<long long>(sod % 60));
    return buf;
}

std::string format_duration(Duration seconds) {
    char buf[48];
    const double s = static_cast<double>(seconds);
    if (seconds >= 2 * 86400)
        std::snprintf(buf, sizeof buf, "%.1f d", s / 86400.0);
    else if (seconds >= 3 * 3600)
        std::snprintf(buf, sizeof buf, "%.1f h", s / 3600.0);
    else if (seconds >= 120)
        std::snprintf(buf, sizeof buf, "%.1f min", s / 60.0);
    else
        std::snprintf(buf, sizeof buf, "%lld s", static_cast<long long>(seconds));
    return buf;
}

std::int64_t TimeAxis::index_of(Timestamp t) const {
    if (t < start || t > end())
        throw RangeError("timestamp " + format_timestamp(t) + " outside axis [" +
                         format_timestamp(start) + ", " + format_timestamp(end()) + "]");
    if ((t - start) % step != 0)
        throw AlignmentError("timestamp " + format_timestamp(t) + " is off the " +
                             std::to_string(step) + " s grid");
    return (t - start) / step;
}

} // namespace leakwatch
