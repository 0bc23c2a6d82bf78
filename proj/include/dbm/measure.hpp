#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbm/hydro.hpp"
#include "dbm/quadrature.hpp"
#include "dbm/sde.hpp"

namespace dbm {

// (1/N) sum 1/(l_i - z). Conjugate symmetric, maps C+ to C+.
inline cplx empirical_stieltjes(std::span<const double> positions, cplx z) {
    if (z.imag() == 0.0)
        throw std::domain_error("empirical_stieltjes: z must be off the real axis");
    cplx s{0.0, 0.0};
    for (double x : positions) s += 1.0 / (x - z);
    return s / static_cast<double>(positions.size());
}

inline cplx empirical_stieltjes(const ParticleConfiguration& config, cplx z) {
    return empirical_stieltjes(std::span<const double>(config.positions), z);
}

// Density smoothed at scale eta_probe: Im m_t(E + i eta_probe) / pi.
inline double density(const HydroSolution& solution, double E, double eta_probe) {
    if (!(eta_probe >= solution.params().eta_floor))
        throw std::invalid_argument("density: eta_probe must be >= eta_floor");
    const double v = solution.evaluate_m(cplx(E, eta_probe)).imag() / M_PI;
    return v > 0.0 ? v : 0.0;
}

// Classical particle locations: gamma_i is the smallest x whose cumulative
// mass reaches i/N.
struct QuantileTable {
    double t = 0.0;
    std::vector<double> gamma;

    void validate() const {
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            if (!std::isfinite(gamma[i]))
                throw std::logic_error("quantile table: non-finite entry");
            if (i > 0 && gamma[i] < gamma[i - 1])
                throw std::logic_error("quantile table: not nondecreasing");
        }
    }
};

namespace detail {

// Bulk window [E_min, E_max] located by scanning the smoothed density
// outward until it falls below the support threshold. Probes beyond the mesh
// coverage count as vanishing; a mesh that under-covers the support then
// fails the mass check downstream instead of silently extrapolating.
inline std::pair<double, double> density_window(const HydroSolution& solution, double eta_probe,
                                                double threshold = 1e-8) {
    const auto rho = [&](double x) {
        try {
            return density(solution, x, eta_probe);
        } catch (const coverage_error&) {
            return 0.0;
        }
    };
    const double reach = solution.potential().b_cut() + 1.0;
    const double coarse = 0.25;
    double lo = 0.0, hi = 0.0;
    bool found = false;
    for (double e = 0.0; e <= reach; e += coarse) {
        for (double sign : {-1.0, 1.0}) {
            const double x = sign * e;
            if (rho(x) >= threshold) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
                found = true;
            }
        }
    }
    if (!found) throw std::runtime_error("density_window: no support found");
    // push each edge outward until the density dies, then pad
    while (lo > -reach && rho(lo - coarse) >= threshold) lo -= coarse;
    while (hi < reach && rho(hi + coarse) >= threshold) hi += coarse;
    return {lo - coarse - 0.05, hi + coarse + 0.05};
}

}  // namespace detail

inline QuantileTable classical_locations(const HydroSolution& solution, int N,
                                         double cdf_tol = 0.01) {
    if (N < 1) throw std::invalid_argument("classical_locations: N must be >= 1");
    const double eta_probe = std::max(1e-4, 1.0 / (10.0 * static_cast<double>(N)));
    const auto [e_min, e_max] = detail::density_window(solution, eta_probe);
    const auto rho = [&](double x) {
        try {
            return density(solution, x, eta_probe);
        } catch (const coverage_error&) {
            return 0.0;  // window padding may poke past the mesh; mass check guards
        }
    };
    CumulativeTable cdf(rho, e_min, e_max, 1e-6);
    const double mass = cdf.total();
    if (std::abs(mass - 1.0) > cdf_tol)
        throw std::runtime_error("classical_locations: density mass " + std::to_string(mass) +
                                 " deviates from 1 beyond tolerance " + std::to_string(cdf_tol));
    QuantileTable table;
    table.t = solution.t();
    table.gamma.resize(static_cast<std::size_t>(N));
    for (int i = 1; i <= N; ++i) {
        // the top quantile sits at the support edge, not the window edge
        const double p = std::min(mass * static_cast<double>(i) / static_cast<double>(N),
                                  mass * (1.0 - 1e-12));
        table.gamma[static_cast<std::size_t>(i - 1)] = cdf.quantile(p);
    }
    table.validate();
    return table;
}

}  // namespace dbm
