#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oplab {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension disagreement between arrays that must chain.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration or misuse of a typed object (wrong decoder kind, bad sizes).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed container file; carries the byte offset where parsing failed.
struct FormatError : Error {
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"), byte_offset(offset) {}
    std::size_t byte_offset;
};

// Training diverged or produced non-finite values; iteration records where.
struct TrainingError : Error {
    TrainingError(const std::string& msg, long iter)
        : Error(msg + " (iteration " + std::to_string(iter) + ")"), iteration(iter) {}
    long iteration;
};

// Time step violates the CFL stability bound.
struct CflError : Error {
    explicit CflError(const std::string& msg) : Error(msg) {}
};

// Solver state became unphysical (non-positive depth, non-finite fields).
struct InstabilityError : Error {
    explicit InstabilityError(const std::string& msg) : Error(msg) {}
};

// Not enough data for the requested statistic.
struct StatsError : Error {
    explicit StatsError(const std::string& msg) : Error(msg) {}
};

}  // namespace oplab
