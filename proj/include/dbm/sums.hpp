#pragma once

#include <cstddef>

namespace dbm::detail {

// sum over j in [lo, hi) of 1/(xi - x[j]); eight independent accumulators
// keep the reduction vectorizable without relaxed fp flags, and the result
// is a pure function of the inputs regardless of thread count
inline double inverse_distance_sum(const double* x, std::size_t lo, std::size_t hi, double xi) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    double s4 = 0.0, s5 = 0.0, s6 = 0.0, s7 = 0.0;
    std::size_t j = lo;
    for (; j + 8 <= hi; j += 8) {
        s0 += 1.0 / (xi - x[j + 0]);
        s1 += 1.0 / (xi - x[j + 1]);
        s2 += 1.0 / (xi - x[j + 2]);
        s3 += 1.0 / (xi - x[j + 3]);
        s4 += 1.0 / (xi - x[j + 4]);
        s5 += 1.0 / (xi - x[j + 5]);
        s6 += 1.0 / (xi - x[j + 6]);
        s7 += 1.0 / (xi - x[j + 7]);
    }
    for (; j < hi; ++j) s0 += 1.0 / (xi - x[j]);
    return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
}

inline double repulsion_sum(const double* x, std::size_t n, std::size_t i) {
    return inverse_distance_sum(x, 0, i, x[i]) + inverse_distance_sum(x, i + 1, n, x[i]);
}

// acc[i] += sum_{j != i} 1/(x[i] - x[j]) for all i, exploiting antisymmetry:
// each pair is divided once and enters the row with + and the column with -.
// Off-diagonal tiles keep the inner loop vectorizable; acc must be zeroed by
// the caller. Deterministic for fixed inputs.
inline void repulsion_sums(const double* x, std::size_t n, double* acc) {
    constexpr std::size_t B = 64;
    for (std::size_t i0 = 0; i0 < n; i0 += B) {
        const std::size_t i1 = i0 + B < n ? i0 + B : n;
        // diagonal tile: strict lower triangle
        for (std::size_t i = i0; i < i1; ++i) {
            const double xi = x[i];
            double rs = 0.0;
            for (std::size_t j = i0; j < i; ++j) {
                const double w = 1.0 / (xi - x[j]);
                rs += w;
                acc[j] -= w;
            }
            acc[i] += rs;
        }
        // tiles strictly left of the diagonal
        for (std::size_t j0 = 0; j0 < i0; j0 += B) {
            const std::size_t j1 = j0 + B;
            for (std::size_t i = i0; i < i1; ++i) {
                const double xi = x[i];
                double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                std::size_t j = j0;
                for (; j + 4 <= j1; j += 4) {
                    const double w0 = 1.0 / (xi - x[j + 0]);
                    const double w1 = 1.0 / (xi - x[j + 1]);
                    const double w2 = 1.0 / (xi - x[j + 2]);
                    const double w3 = 1.0 / (xi - x[j + 3]);
                    acc[j + 0] -= w0;
                    acc[j + 1] -= w1;
                    acc[j + 2] -= w2;
                    acc[j + 3] -= w3;
                    s0 += w0;
                    s1 += w1;
                    s2 += w2;
                    s3 += w3;
                }
                acc[i] += (s0 + s1) + (s2 + s3);
            }
        }
    }
}

}  // namespace dbm::detail
