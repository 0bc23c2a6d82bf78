#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace dbm {

// Counter-based random numbers: Philox2x64-10. A draw is a pure function of
// (key, counter), so ensembles are reproducible no matter how work is
// scheduled across threads.
namespace philox {

inline constexpr std::uint64_t kMult = 0xD2B74407B1CE6E93ull;
inline constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ull;

inline std::pair<std::uint64_t, std::uint64_t> block(std::uint64_t key,
                                                     std::uint64_t c0,
                                                     std::uint64_t c1) {
    for (int round = 0; round < 10; ++round) {
        const unsigned __int128 prod = static_cast<unsigned __int128>(kMult) * c0;
        const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
        const std::uint64_t lo = static_cast<std::uint64_t>(prod);
        c0 = hi ^ key ^ c1;
        c1 = lo;
        key += kWeyl;
    }
    return {c0, c1};
}

}  // namespace philox

inline double uniform01(std::uint64_t bits) {
    // (0, 1]: keeps log() finite below
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

// Standard normal draw addressed by (seed, step, index); Box-Muller on one
// Philox block.
inline double normal_draw(std::uint64_t seed, std::uint64_t step, std::uint64_t index) {
    const auto [a, b] = philox::block(seed, step, index);
    const double r = std::sqrt(-2.0 * std::log(uniform01(a)));
    constexpr double two_pi = 6.283185307179586476925286766559;
    return r * std::cos(two_pi * uniform01(b));
}

// Both Box-Muller outputs of one block; the bulk integrator consumes normals
// two particles at a time.
inline std::pair<double, double> normal_pair(std::uint64_t seed, std::uint64_t step,
                                             std::uint64_t pair_index) {
    const auto [a, b] = philox::block(seed, step, pair_index);
    const double r = std::sqrt(-2.0 * std::log(uniform01(a)));
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double theta = two_pi * uniform01(b);
    return {r * std::cos(theta), r * std::sin(theta)};
}

}  // namespace dbm
