#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbm/hydro.hpp"
#include "dbm/measure.hpp"
#include "dbm/quadrature.hpp"
#include "dbm/sde.hpp"

namespace dbm {

// Spectral-domain bookkeeping: control parameter M = (log N)^(2+2 delta),
// drift constant K and hard-floor exponent c. Logarithms here are base 10;
// the desk-scale thresholds and windows are calibrated to that choice.
inline double domain_log(double n) { return std::log10(n); }

struct SpectralDomainParams {
    int n = 0;
    double delta = 0.1;
    double M = 0.0;
    double K = 10.0;
    double c_exp = 3.0;

    static SpectralDomainParams make(int n, double delta = 0.1, double K = 10.0,
                                     double c_exp = 3.0) {
        if (n < 2) throw std::invalid_argument("spectral domain: N must be >= 2");
        if (!(delta > 0.0)) throw std::invalid_argument("spectral domain: delta must be positive");
        if (!(c_exp >= 1.0)) throw std::invalid_argument("spectral domain: c exponent must be >= 1");
        SpectralDomainParams p;
        p.n = n;
        p.delta = delta;
        p.K = K;
        p.c_exp = c_exp;
        p.M = std::pow(domain_log(static_cast<double>(n)), 2.0 + 2.0 * delta);
        return p;
    }

    void check_consistent() const {
        const double expect = std::pow(domain_log(static_cast<double>(n)), 2.0 + 2.0 * delta);
        if (expect != M)
            throw std::logic_error("spectral domain: stored M does not match (N, delta)");
    }
};

// Membership in the spectral domain at time s:
//   Im w >= max(e^{Ks} M log N / (N Im m_s(w)), e^{Ks} N^{-c}),
//   Im w <= 3b - s,  |Re w| <= 3b - s.
inline bool in_domain(const SpectralDomainParams& params, const HydroSolution& solution, cplx w,
                      double s, int N, double b_cut) {
    if (!(w.imag() > 0.0)) throw std::invalid_argument("in_domain: Im w must be positive");
    const double box = 3.0 * b_cut - s;
    if (w.imag() > box || std::abs(w.real()) > box) return false;
    const double growth = std::exp(params.K * s);
    const double hard_floor = growth * std::pow(static_cast<double>(N), -params.c_exp);
    if (w.imag() < hard_floor) return false;
    const double im_m = solution.evaluate_m(w).imag();
    if (!(im_m > 0.0)) return false;
    const double soft_floor =
        growth * params.M * domain_log(static_cast<double>(N)) / (static_cast<double>(N) * im_m);
    return w.imag() >= soft_floor;
}

// Candidate probe grid intersected with the domain; deterministic order.
inline std::vector<cplx> domain_grid(const SpectralDomainParams& params,
                                     const HydroSolution& solution, double s, int N, double b_cut,
                                     std::span<const cplx> candidates, std::size_t target) {
    std::vector<cplx> grid;
    for (cplx w : candidates) {
        if (grid.size() >= target) break;
        if (in_domain(params, solution, w, s, N, b_cut)) grid.push_back(w);
    }
    if (grid.empty())
        throw std::runtime_error("domain_grid: no candidate probe lies in the spectral domain");
    return grid;
}

struct LocalLawReport {
    double max_r = 0.0;
    double pass_fraction = 1.0;
    cplx worst_w{0.0, 0.0};
    std::size_t points = 0;
    std::size_t passes = 0;
};

// r(w) = N Im w |m_tilde(w) - m(w)| over a fixed in-domain grid with
// precomputed hydrodynamic values.
inline LocalLawReport local_law_on_grid(const ParticleConfiguration& config,
                                        std::span<const cplx> grid,
                                        std::span<const cplx> m_values,
                                        const SpectralDomainParams& params) {
    if (grid.size() != m_values.size() || grid.empty())
        throw std::invalid_argument("local_law_on_grid: grid/value mismatch");
    LocalLawReport rep;
    rep.points = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const cplx w = grid[i];
        const double r = static_cast<double>(config.n()) * w.imag() *
                         std::abs(empirical_stieltjes(config, w) - m_values[i]);
        if (r <= params.M) ++rep.passes;
        if (r > rep.max_r) {
            rep.max_r = r;
            rep.worst_w = w;
        }
    }
    rep.pass_fraction = static_cast<double>(rep.passes) / static_cast<double>(grid.size());
    return rep;
}

inline LocalLawReport local_law_report(const ParticleConfiguration& config,
                                       const HydroSolution& solution,
                                       const SpectralDomainParams& params,
                                       std::span<const cplx> candidates, std::size_t target) {
    if (std::abs(config.time - solution.t()) > 1e-12)
        throw std::invalid_argument("local_law_report: configuration and solution time stamps differ");
    const std::vector<cplx> grid = domain_grid(params, solution, solution.t(), config.n(),
                                               solution.potential().b_cut(), candidates, target);
    std::vector<cplx> m_values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) m_values[i] = solution.evaluate_m(grid[i]);
    return local_law_on_grid(config, grid, m_values, params);
}

struct RigidityReport {
    long violations = 0;
    long max_displacement = 0;  // signed index displacement with largest magnitude
    long window = 0;
    double floor_shift = 0.0;
};

// Checks gamma_{i-w} - N^{1-c} <= l_i <= gamma_{i+w} + N^{1-c} for every
// index, with out-of-range windows clamped away (the +-infinity convention),
// and reports the index displacement of each particle inside the quantile
// table.
inline RigidityReport rigidity_report(const ParticleConfiguration& config,
                                      const QuantileTable& table,
                                      const SpectralDomainParams& params) {
    const int n = config.n();
    if (static_cast<int>(table.gamma.size()) != n)
        throw std::invalid_argument("rigidity_report: table length mismatch");
    std::vector<double> lam = config.positions;
    std::sort(lam.begin(), lam.end());
    RigidityReport rep;
    rep.window = static_cast<long>(std::ceil(params.M * domain_log(static_cast<double>(n))));
    rep.floor_shift = std::pow(static_cast<double>(n), 1.0 - params.c_exp);
    for (int i = 1; i <= n; ++i) {
        const double li = lam[static_cast<std::size_t>(i - 1)];
        const long lo_idx = static_cast<long>(i) - rep.window;
        const long hi_idx = static_cast<long>(i) + rep.window;
        if (lo_idx >= 1 &&
            li < table.gamma[static_cast<std::size_t>(lo_idx - 1)] - rep.floor_shift)
            ++rep.violations;
        if (hi_idx <= n &&
            li > table.gamma[static_cast<std::size_t>(hi_idx - 1)] + rep.floor_shift)
            ++rep.violations;
        const long rank = static_cast<long>(
            std::upper_bound(table.gamma.begin(), table.gamma.end(), li) - table.gamma.begin());
        const long d = rank - static_cast<long>(i);
        if (std::abs(d) > std::abs(rep.max_displacement)) rep.max_displacement = d;
    }
    return rep;
}

// One Monte Carlo draw of the normalized fluctuation field
// Gamma_t(z) = N Im z (m_tilde(z) - m_t(z)) at a fixed probe set.
struct FluctuationSample {
    std::vector<cplx> probes;
    std::vector<cplx> gamma;
    int run_id = 0;
};

// Operational probe window: the mesoscopic scale separations are enforced as
// Im z >= lo_factor M^2/N and Im z <= t / (hi_factor M log N) with the energy
// window [E0 - r/2, E0 + r/2]. Factors are configurable because the strict
// factor-10 reading empties the window at desk-scale N.
struct ProbeGeometry {
    double e_lo = -0.25, e_hi = 0.25;
    double im_lo = 0.0, im_hi = 1.0;
    bool enforce = true;

    static ProbeGeometry from_params(const SpectralDomainParams& p, double t, double E0, double r,
                                     double lo_factor = 10.0, double hi_factor = 10.0) {
        ProbeGeometry g;
        g.e_lo = E0 - 0.5 * r;
        g.e_hi = E0 + 0.5 * r;
        g.im_lo = lo_factor * p.M * p.M / static_cast<double>(p.n);
        g.im_hi = t / (hi_factor * p.M * domain_log(static_cast<double>(p.n)));
        return g;
    }

    void check(cplx z) const {
        if (!enforce) return;
        if (z.real() < e_lo || z.real() > e_hi)
            throw std::invalid_argument("probe geometry: Re z = " + std::to_string(z.real()) +
                                        " outside [" + std::to_string(e_lo) + ", " +
                                        std::to_string(e_hi) + "]");
        if (z.imag() < im_lo)
            throw std::invalid_argument("probe geometry: Im z = " + std::to_string(z.imag()) +
                                        " below the mesoscopic floor " + std::to_string(im_lo));
        if (z.imag() > im_hi)
            throw std::invalid_argument("probe geometry: Im z = " + std::to_string(z.imag()) +
                                        " above the mesoscopic ceiling " + std::to_string(im_hi));
    }
};

inline FluctuationSample gamma_field_values(const ParticleConfiguration& config,
                                            std::span<const cplx> probes,
                                            std::span<const cplx> m_values, int run_id = 0) {
    if (probes.size() != m_values.size())
        throw std::invalid_argument("gamma_field: probe/value mismatch");
    FluctuationSample s;
    s.run_id = run_id;
    s.probes.assign(probes.begin(), probes.end());
    s.gamma.resize(probes.size());
    for (std::size_t j = 0; j < probes.size(); ++j) {
        const cplx z = probes[j];
        s.gamma[j] = static_cast<double>(config.n()) * z.imag() *
                     (empirical_stieltjes(config, z) - m_values[j]);
        if (!std::isfinite(s.gamma[j].real()) || !std::isfinite(s.gamma[j].imag()))
            throw std::runtime_error("gamma_field: non-finite fluctuation sample");
    }
    return s;
}

inline FluctuationSample gamma_field(const ParticleConfiguration& config,
                                     const HydroSolution& solution, std::span<const cplx> probes,
                                     const ProbeGeometry& geometry, int run_id = 0) {
    std::vector<cplx> m_values(probes.size());
    for (std::size_t j = 0; j < probes.size(); ++j) {
        geometry.check(probes[j]);
        m_values[j] = solution.evaluate_m(probes[j]);
    }
    return gamma_field_values(config, probes, m_values, run_id);
}

// Covariance block of (Re Gamma(z), Im Gamma(z)) against
// (Re Gamma(w), Im Gamma(w)) implied by the limiting Gaussian characteristic
// function. With kappa(z, w) = -Im z Im w / (beta (z - conj w)^2):
//   [[Re k, -Im k], [Im k, Re k]].
// The factor normalization is pinned by the specialization
// predicted_covariance(z, z) = diag(1/(4 beta)) and is unit-tested against a
// numerical Hessian of the characteristic function at the origin.
using Cov2 = std::array<std::array<double, 2>, 2>;

inline Cov2 predicted_covariance(cplx z, cplx w, double beta) {
    if (!(z.imag() > 0.0) || !(w.imag() > 0.0))
        throw std::invalid_argument("predicted_covariance: probes must be in the upper half plane");
    const cplx d = z - std::conj(w);
    const cplx kappa = -z.imag() * w.imag() / (beta * d * d);
    return {{{kappa.real(), -kappa.imag()}, {kappa.imag(), kappa.real()}}};
}

// Full 2k x 2k predicted covariance in coordinates
// (Re G(z_1), Im G(z_1), ..., Re G(z_k), Im G(z_k)), row-major.
inline std::vector<double> predicted_covariance_matrix(std::span<const cplx> probes, double beta) {
    const std::size_t k = probes.size();
    std::vector<double> m(4 * k * k, 0.0);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
            const Cov2 blk = predicted_covariance(probes[a], probes[b], beta);
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q)
                    m[(2 * a + static_cast<std::size_t>(p)) * 2 * k + 2 * b +
                      static_cast<std::size_t>(q)] = blk[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)];
        }
    return m;
}

struct CltReport {
    std::size_t runs = 0;
    std::size_t probes = 0;
    std::vector<double> mean;           // length 2k
    std::vector<double> cov_empirical;  // 2k x 2k row-major
    std::vector<double> cov_predicted;  // 2k x 2k row-major
    double cov_distance = 0.0;          // max abs entry difference
    std::vector<double> skewness;       // per coordinate
    std::vector<double> excess_kurtosis;
};

inline CltReport clt_report(std::span<const FluctuationSample> samples, double beta) {
    if (samples.size() < 500)
        throw std::invalid_argument("clt_report: needs at least 500 samples, got " +
                                    std::to_string(samples.size()));
    const std::size_t k = samples.front().probes.size();
    const std::size_t d = 2 * k;
    for (const auto& s : samples) {
        if (s.probes.size() != k || s.gamma.size() != k)
            throw std::invalid_argument("clt_report: inconsistent probe sets across samples");
    }
    const std::size_t n = samples.size();
    CltReport rep;
    rep.runs = n;
    rep.probes = k;
    rep.mean.assign(d, 0.0);
    auto coord = [&](const FluctuationSample& s, std::size_t j) {
        return j % 2 == 0 ? s.gamma[j / 2].real() : s.gamma[j / 2].imag();
    };
    for (const auto& s : samples)
        for (std::size_t j = 0; j < d; ++j) rep.mean[j] += coord(s, j);
    for (std::size_t j = 0; j < d; ++j) rep.mean[j] /= static_cast<double>(n);

    rep.cov_empirical.assign(d * d, 0.0);
    std::vector<double> m2(d, 0.0), m3(d, 0.0), m4(d, 0.0);
    for (const auto& s : samples) {
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = coord(s, a) - rep.mean[a];
            m2[a] += xa * xa;
            m3[a] += xa * xa * xa;
            m4[a] += xa * xa * xa * xa;
            for (std::size_t b = 0; b < d; ++b)
                rep.cov_empirical[a * d + b] += xa * (coord(s, b) - rep.mean[b]);
        }
    }
    for (auto& v : rep.cov_empirical) v /= static_cast<double>(n - 1);
    rep.skewness.resize(d);
    rep.excess_kurtosis.resize(d);
    for (std::size_t a = 0; a < d; ++a) {
        const double v2 = m2[a] / static_cast<double>(n);
        const double v3 = m3[a] / static_cast<double>(n);
        const double v4 = m4[a] / static_cast<double>(n);
        rep.skewness[a] = v3 / std::pow(v2, 1.5);
        rep.excess_kurtosis[a] = v4 / (v2 * v2) - 3.0;
    }
    rep.cov_predicted = predicted_covariance_matrix(samples.front().probes, beta);
    for (std::size_t i = 0; i < d * d; ++i)
        rep.cov_distance =
            std::max(rep.cov_distance, std::abs(rep.cov_empirical[i] - rep.cov_predicted[i]));
    return rep;
}

// --- mesoscopic linear statistics -----------------------------------------

struct LinearStatConfig {
    enum class Psi { Gaussian, Bump };
    Psi psi = Psi::Gaussian;
    double eta = 0.01;
    double E = 0.0;

    double psi_value(double x) const {
        switch (psi) {
            case Psi::Gaussian:
                return std::exp(-x * x);
            case Psi::Bump:
                return std::abs(x) < 1.0 ? std::exp(-1.0 / (1.0 - x * x)) : 0.0;
        }
        return 0.0;
    }
    double psi_deriv(double x) const {
        switch (psi) {
            case Psi::Gaussian:
                return -2.0 * x * std::exp(-x * x);
            case Psi::Bump: {
                if (std::abs(x) >= 1.0) return 0.0;
                const double q = 1.0 - x * x;
                return -2.0 * x / (q * q) * std::exp(-1.0 / q);
            }
        }
        return 0.0;
    }
    double support_radius() const {
        return psi == Psi::Gaussian ? 7.0 : 1.0;
    }
};

// sigma_psi^2 = (1/(2 beta pi^2)) double-integral of ((psi(x)-psi(y))/(x-y))^2.
// Organized as an iterated integral in u = y - x with the diagonal handled by
// the psi' limit. For |u| past the overlap scale the inner integral is
// evaluated through the correlation identity
//   int (psi(x+u)-psi(x))^2 dx = 2 ||psi||^2 - 2 int psi(x) psi(x+u) dx,
// whose integrand lives on a single interval (a direct difference quadrature
// would have to find two isolated bumps). The 1/u^2 tail beyond the support
// diameter is added in closed form.
inline double sigma_psi_squared(const LinearStatConfig& cfg, double beta) {
    if (!(beta >= 1.0)) throw std::invalid_argument("sigma_psi_squared: beta must be >= 1");
    const double R = cfg.support_radius();
    const auto psi = [&](double x) { return cfg.psi_value(x); };
    const double norm2 = adaptive_simpson([&](double x) { return psi(x) * psi(x); }, -R, R, 1e-12);
    const double U = 8.0 * R;
    const auto inner = [&](double u) {
        if (std::abs(u) < 1e-7) {
            return adaptive_simpson([&](double x) {
                const double d = cfg.psi_deriv(x);
                return d * d;
            }, -R, R, 1e-10);
        }
        if (std::abs(u) <= 1.0) {
            // overlapping supports: direct difference over the merged window
            const double lo = std::min(-R, -R - u), hi = std::max(R, R - u);
            const double val = adaptive_simpson([&](double x) {
                const double d = psi(x + u) - psi(x);
                return d * d;
            }, lo, hi, 1e-11);
            return val / (u * u);
        }
        const double lo = std::max(-R, -R - u), hi = std::min(R, R - u);
        const double corr =
            hi > lo ? adaptive_simpson([&](double x) { return psi(x) * psi(x + u); }, lo, hi, 1e-12)
                    : 0.0;
        return (2.0 * norm2 - 2.0 * corr) / (u * u);
    };
    const double core = adaptive_simpson(inner, -U, U, 1e-7, 28);
    const double tail = 4.0 * norm2 / U;
    return (core + tail) / (2.0 * beta * M_PI * M_PI);
}

// Independent route through the Fourier side:
// sigma_psi^2 = (1/(2 beta pi^2)) integral |xi| |F(xi)|^2 dxi with
// F(xi) = integral psi(x) e^{-i xi x} dx (equivalently (1/(beta pi)) times
// the same integral against the unitary transform squared).
inline double sigma_psi_squared_fourier(const LinearStatConfig& cfg, double beta) {
    const double R = cfg.support_radius();
    const auto ft2 = [&](double xi) {
        // pre-split by the oscillation count so no lobe is skipped
        const int osc = std::max(16, static_cast<int>(std::abs(xi) * 2.0 * R / 3.0) + 1);
        const double re = adaptive_simpson(
            [&](double x) { return cfg.psi_value(x) * std::cos(xi * x); }, -R, R, 1e-11, 40,
            nullptr, osc);
        const double im = adaptive_simpson(
            [&](double x) { return cfg.psi_value(x) * std::sin(xi * x); }, -R, R, 1e-11, 40,
            nullptr, osc);
        return re * re + im * im;
    };
    const double xi_max = cfg.psi == LinearStatConfig::Psi::Gaussian ? 20.0 : 250.0;
    const double integral =
        2.0 * adaptive_simpson([&](double xi) { return xi * ft2(xi); }, 0.0, xi_max, 1e-7, 24);
    return integral / (2.0 * beta * M_PI * M_PI);
}

// L(psi_{eta,E}) = sum_i psi((l_i - E)/eta) - N integral psi((x - E)/eta) rho_t(x) dx.
inline double linear_statistic(const ParticleConfiguration& config, const HydroSolution& solution,
                               const LinearStatConfig& cfg) {
    if (!(cfg.eta > 0.0)) throw std::invalid_argument("linear_statistic: eta must be positive");
    double stat = 0.0;
    for (double x : config.positions) stat += cfg.psi_value((x - cfg.E) / cfg.eta);
    const double R = cfg.support_radius();
    const double eta_c = std::max(solution.params().eta_floor, std::min(1e-3, cfg.eta / 10.0));
    const double lo = cfg.E - R * cfg.eta, hi = cfg.E + R * cfg.eta;
    const double centering = adaptive_simpson(
        [&](double x) {
            return cfg.psi_value((x - cfg.E) / cfg.eta) * density(solution, x, eta_c);
        },
        lo, hi, 1e-5 / static_cast<double>(config.n()), 30);
    return stat - static_cast<double>(config.n()) * centering;
}

}  // namespace dbm
