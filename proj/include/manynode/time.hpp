#pragma once

#include <cmath>
#include <cstdint>

namespace manynode {

/// Simulated time and durations, in picoseconds. Integer ticks keep event
/// ordering exact and reproducible; public interfaces speak nanoseconds.
using SimTime = std::int64_t;

constexpr SimTime kPicosPerNano = 1000;

constexpr SimTime from_ns(double ns) {
    return static_cast<SimTime>(ns * static_cast<double>(kPicosPerNano) + (ns < 0 ? -0.5 : 0.5));
}

constexpr double to_ns(SimTime t) {
    return static_cast<double>(t) / static_cast<double>(kPicosPerNano);
}

/// Time to push `bytes` through a link of `bits_per_second`.
inline SimTime serialization_time(std::uint64_t bytes, double bits_per_second) {
    return static_cast<SimTime>(std::llround(static_cast<double>(bytes) * 8.0e12 / bits_per_second));
}

}  // namespace manynode
