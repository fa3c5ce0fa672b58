#include "casp/rng.hpp"

#include <cmath>
#include <numbers>

namespace casp {

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection sampling keeps the result exactly uniform.
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view experiment, std::string_view stream,
                          std::uint64_t index) {
    std::uint64_t h = mix64(master);
    // Field separators keep ("ab", "c") and ("a", "bc") apart.
    h = fnv1a64(experiment, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(stream, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h ^= mix64(index);
    return mix64(h);
}

}  // namespace casp
