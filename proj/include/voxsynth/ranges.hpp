#pragma once

#include <cstdint>

#include "json.hpp"

namespace voxsynth {

// Continuous interval [lo, hi]; lo == hi is a point.
struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Range &) const = default;
};

// Integer interval {lo..hi}, inclusive.
struct IntRange {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    bool operator==(const IntRange &) const = default;
};

// Serialised as two-element arrays.
inline void to_json(nlohmann::json &j, const Range &r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json &j, Range &r) {
    r.lo = j.at(0).get<double>();
    r.hi = j.at(1).get<double>();
}
inline void to_json(nlohmann::json &j, const IntRange &r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json &j, IntRange &r) {
    r.lo = j.at(0).get<std::int64_t>();
    r.hi = j.at(1).get<std::int64_t>();
}

}  // namespace voxsynth
