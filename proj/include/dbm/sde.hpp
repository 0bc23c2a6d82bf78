#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbm/parallel.hpp"
#include "dbm/sums.hpp"
#include "dbm/potential.hpp"
#include "dbm/rng.hpp"

namespace dbm {

// Ordered particle positions of the interacting diffusion
//   d l_i = sqrt(2/(beta N)) dB_i + (1/N) sum_{j != i} dt/(l_i - l_j) - V'(l_i)/2 dt.
struct ParticleConfiguration {
    std::vector<double> positions;  // nondecreasing
    double time = 0.0;
    double beta = 2.0;

    int n() const { return static_cast<int>(positions.size()); }

    void validate() const {
        if (positions.empty())
            throw std::invalid_argument("particle configuration: empty");
        if (!(beta >= 1.0))
            throw std::invalid_argument("particle configuration: beta must be >= 1");
        if (!(time >= 0.0) || !std::isfinite(time))
            throw std::invalid_argument("particle configuration: bad time stamp");
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (!std::isfinite(positions[i]))
                throw std::invalid_argument("particle configuration: non-finite position at index " +
                                            std::to_string(i));
            if (i > 0 && positions[i] < positions[i - 1])
                throw std::invalid_argument("particle configuration: positions not sorted");
        }
    }
};

struct SdeParams {
    double step_h = 0.0;     // 0 -> min(1e-2, 1/(4 N^2))
    std::uint64_t seed = 0;
    double gap_floor = -1.0; // < 0 -> 1/(20 N)
    bool noise = true;
    int max_halvings = 12;

    double resolved_step(int n) const {
        const double h = step_h > 0.0 ? step_h
                                      : std::min(1e-2, 1.0 / (4.0 * double(n) * double(n)));
        if (!(h > 0.0) || h > 1.0)
            throw std::invalid_argument("sde: step_h must lie in (0, 1]");
        return h;
    }
    double resolved_gap_floor(int n) const {
        const double g = gap_floor >= 0.0 ? gap_floor : 1.0 / (20.0 * double(n));
        if (g >= 1.0 / double(n))
            throw std::invalid_argument("sde: gap_floor must stay below the typical spacing 1/N");
        return g;
    }
};

// Per-run diagnostics. Ordering repairs and confinement excursions are
// counted rather than silently accepted.
struct SdeMonitor {
    long steps = 0;
    long substeps = 0;       // leaf steps taken below the nominal step
    long crossings = 0;      // adjacent-order violations repaired by sorting
    double max_abs_position = 0.0;
    double confinement_radius = 0.0;  // b_cut used for the check
    long confinement_violations = 0;

    void merge(const SdeMonitor& o) {
        steps += o.steps;
        substeps += o.substeps;
        crossings += o.crossings;
        max_abs_position = std::max(max_abs_position, o.max_abs_position);
        confinement_violations += o.confinement_violations;
    }
};

namespace detail {

inline void drift_into(const std::vector<double>& x, const Potential& pot,
                       std::vector<double>& d) {
    const std::size_t n = x.size();
    for (std::size_t i = 1; i < n; ++i)
        if (x[i] == x[i - 1])
            throw std::invalid_argument("drift: degenerate configuration, duplicate position at index " +
                                        std::to_string(i));
    d.assign(n, 0.0);
    repulsion_sums(x.data(), n, d.data());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = d[i] * inv_n - 0.5 * pot.v(x[i], 1);
}

}  // namespace detail

// Interaction-plus-confinement drift. Pair terms enter antisymmetrically, so
// sum_i [drift_i + V'(l_i)/2] vanishes up to rounding.
inline std::vector<double> drift(const ParticleConfiguration& config, const Potential& pot) {
    std::vector<double> d;
    detail::drift_into(config.positions, pot, d);
    return d;
}

namespace detail {

// Euler-Maruyama update of `state` in place; `drift_buf` is scratch.
inline void step_once(ParticleConfiguration& state, const Potential& pot,
                      std::span<const double> gauss, double h, SdeMonitor* monitor,
                      std::vector<double>& drift_buf) {
    const int n = state.n();
    if (static_cast<int>(gauss.size()) != n)
        throw std::invalid_argument("em_step: gauss vector length mismatch");
    drift_into(state.positions, pot, drift_buf);
    const double noise_scale = std::sqrt(2.0 * h / (state.beta * double(n)));
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
        state.positions[k] += h * drift_buf[k] + noise_scale * gauss[k];
        if (!std::isfinite(state.positions[k]))
            throw std::runtime_error(
                "em_step: blow-up, non-finite position at index " + std::to_string(k) +
                " after step h=" + std::to_string(h) + "; retry with a smaller step_h");
    }
    long crossings = 0;
    for (int i = 1; i < n; ++i)
        if (state.positions[static_cast<std::size_t>(i)] < state.positions[static_cast<std::size_t>(i - 1)])
            ++crossings;
    if (crossings > 0) std::sort(state.positions.begin(), state.positions.end());
    state.time += h;
    if (monitor) {
        monitor->crossings += crossings;
        ++monitor->steps;
        const double lo = state.positions.front(), hi = state.positions.back();
        monitor->max_abs_position = std::max({monitor->max_abs_position, std::abs(lo), std::abs(hi)});
    }
}

}  // namespace detail

// One explicit Euler-Maruyama step of size h with supplied standard normal
// draws; positions are re-sorted afterwards and repairs are counted.
inline ParticleConfiguration em_step(const ParticleConfiguration& config, const Potential& pot,
                                     const SdeParams& params, std::span<const double> gauss,
                                     double h, SdeMonitor* monitor = nullptr) {
    (void)params;
    ParticleConfiguration out = config;
    std::vector<double> scratch;
    detail::step_once(out, pot, gauss, h, monitor, scratch);
    return out;
}

namespace detail {

// Recursive window on the state in place: a gap below the floor triggers
// halving (up to max_halvings levels) until the local step respects the
// pair-stiffness stability bound h <= N min_gap^2 / 4; each leaf draws its
// own noise.
inline void adaptive_step(ParticleConfiguration& state, const Potential& pot,
                          const SdeParams& params, double h, double gap_floor,
                          std::uint64_t seed, std::uint64_t& draw_counter, int depth,
                          SdeMonitor* monitor, std::vector<double>& gauss_buf,
                          std::vector<double>& drift_buf) {
    const int n = state.n();
    if (depth < params.max_halvings && n > 1) {
        double min_gap = std::numeric_limits<double>::infinity();
        for (int i = 1; i < n; ++i)
            min_gap = std::min(min_gap, state.positions[static_cast<std::size_t>(i)] -
                                            state.positions[static_cast<std::size_t>(i - 1)]);
        const double h_stable = 0.25 * static_cast<double>(n) * min_gap * min_gap;
        if (min_gap < gap_floor && h > h_stable) {
            adaptive_step(state, pot, params, 0.5 * h, gap_floor, seed, draw_counter, depth + 1,
                          monitor, gauss_buf, drift_buf);
            adaptive_step(state, pot, params, 0.5 * h, gap_floor, seed, draw_counter, depth + 1,
                          monitor, gauss_buf, drift_buf);
            return;
        }
    }
    gauss_buf.assign(static_cast<std::size_t>(n), 0.0);
    const std::uint64_t step_index = draw_counter++;
    if (params.noise) {
        for (int i = 0; i + 1 < n; i += 2) {
            const auto [g0, g1] = normal_pair(seed, step_index, static_cast<std::uint64_t>(i / 2));
            gauss_buf[static_cast<std::size_t>(i)] = g0;
            gauss_buf[static_cast<std::size_t>(i + 1)] = g1;
        }
        if (n % 2 == 1)
            gauss_buf[static_cast<std::size_t>(n - 1)] =
                normal_pair(seed, step_index, static_cast<std::uint64_t>(n / 2)).first;
    }
    if (monitor && depth > 0) ++monitor->substeps;
    step_once(state, pot, gauss_buf, h, monitor, drift_buf);
}

}  // namespace detail

// Integrates to t_end with the nominal step (last partial step allowed).
// The draw counter advances per leaf step, so a trajectory is a pure
// function of (config0, pot, params, t_end).
inline ParticleConfiguration simulate(const ParticleConfiguration& config0, const Potential& pot,
                                      const SdeParams& params, double t_end,
                                      SdeMonitor* monitor = nullptr,
                                      std::uint64_t seed_override = 0, bool use_override = false) {
    config0.validate();
    if (!(t_end > config0.time))
        throw std::invalid_argument("simulate: t_end must exceed the initial time");
    const int n = config0.n();
    const double h = params.resolved_step(n);
    const double gap_floor = params.resolved_gap_floor(n);
    const std::uint64_t seed = use_override ? seed_override : params.seed;
    SdeMonitor local;
    SdeMonitor* mon = monitor ? monitor : &local;
    mon->confinement_radius = pot.b_cut();

    ParticleConfiguration state = config0;
    std::uint64_t draw_counter = 0;
    std::vector<double> gauss_buf, drift_buf;
    double remaining = t_end - config0.time;
    while (remaining > 0.0) {
        const double step = std::min(h, remaining);
        detail::adaptive_step(state, pot, params, step, gap_floor, seed, draw_counter, 0, mon,
                              gauss_buf, drift_buf);
        remaining -= step;
        if (remaining < h * 1e-12) remaining = 0.0;
    }
    state.time = t_end;
    if (mon->max_abs_position > pot.b_cut()) ++mon->confinement_violations;
    return state;
}

// Independent runs; run r uses seed ^ r. Outputs are ordered by run index
// regardless of scheduling.
inline std::vector<ParticleConfiguration> ensemble(const ParticleConfiguration& config0,
                                                   const Potential& pot, const SdeParams& params,
                                                   double t_end, int runs,
                                                   std::vector<SdeMonitor>* monitors = nullptr,
                                                   int threads = 0) {
    if (runs < 1) throw std::invalid_argument("ensemble: runs must be >= 1");
    std::vector<ParticleConfiguration> out(static_cast<std::size_t>(runs));
    std::vector<SdeMonitor> mons(static_cast<std::size_t>(runs));
    parallel_for(static_cast<std::size_t>(runs), [&](std::size_t r) {
        try {
            out[r] = simulate(config0, pot, params, t_end, &mons[r],
                              params.seed ^ static_cast<std::uint64_t>(r), true);
        } catch (const std::exception& e) {
            throw std::runtime_error("ensemble: run " + std::to_string(r) + " failed: " + e.what());
        }
    }, threads);
    if (monitors) *monitors = std::move(mons);
    return out;
}

}  // namespace dbm
