#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace casp {

/// Seedable generator with a fully specified output sequence.
///
/// The engine is std::mt19937_64, whose output is fixed by the standard.
/// The library distributions (std::uniform_real_distribution and friends) are
/// implementation-defined, so the conversions to uniform and normal variates
/// are done here: uniform() takes the top 53 bits of one engine draw, and
/// normal() uses the Box-Muller transform on two uniform() draws, caching the
/// second variate.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal variate.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Child seed for a named stream: hash of (master, experiment, stream, index).
/// Adding or removing a stream never changes the seed of any other stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view experiment, std::string_view stream,
                          std::uint64_t index);

}  // namespace casp
