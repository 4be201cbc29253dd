#pragma once

#include <cstdint>
#include <random>

namespace oplab {

// All randomness flows through mt19937_64 plus the two mappings below, so any
// (seed, config) pair reproduces bit-identical streams on every platform.
using Rng = std::mt19937_64;

inline double u01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * u01(rng);
}

// splitmix64 finalizer; decorrelates per-sample streams derived from one base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base ^ (index + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace oplab
