#pragma once

#include <cstdint>
#include <string>

namespace leakwatch {

// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;
using Duration = std::int64_t;

// Accepts "YYYY-MM-DD HH:MM[:SS]" and "YYYY-MM-DDTHH:MM[:SS]", optionally
// suffixed with "Z" or "+HH:MM"/"-HH:MM". Bare timestamps are shifted by
// tz_offset_min (declared input timezone) to UTC.
Timestamp parse_timestamp(const std::string& text, int tz_offset_min = 0);

// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_timestamp(Timestamp t);

// "21 h", "28.2 d", "35 min" — duration for humans, chosen by magnitude.
std::string format_duration(Duration seconds);

// Uniform sampling grid: timestamp(i) = start + i*step.
struct TimeAxis {
    Timestamp start = 0;
    Duration step = 300; // the canonical cadence is one sample per five minutes
    std::int64_t length = 0;

    Timestamp at(std::int64_t i) const { return start + i * step; }
    Timestamp end() const { return start + length * step; }
    bool contains(Timestamp t) const { return t >= start && t < end(); }

    // Index of a grid-aligned timestamp; throws AlignmentError if t is off-grid,
    // RangeError if outside [start, end].
    std::int64_t index_of(Timestamp t) const;

    bool operator==(const TimeAxis&) const = default;
};

struct TimeWindow {
    Timestamp start = 0;
    Timestamp end = 0; // half-open [start, end)
};

} // namespace leakwatch
