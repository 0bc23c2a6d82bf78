#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dbm/parallel.hpp"
#include "dbm/potential.hpp"
#include "dbm/sums.hpp"

namespace dbm {

// Thrown by evaluate_m when the query point lies outside the region the
// characteristic mesh can reach.
class coverage_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Thrown when the flow-map inversion stalls; carries the best residual seen.
class inversion_error : public std::runtime_error {
  public:
    inversion_error(const std::string& what, double residual)
        : std::runtime_error(what), best_residual(residual) {}
    double best_residual;
};

// Stieltjes transform of the initial measure. The hydrodynamic solve accepts
// the empirical transform of a particle configuration or an analytic one.
class InitialTransform {
  public:
    static InitialTransform empirical(std::vector<double> positions) {
        InitialTransform t;
        t.points_ = std::move(positions);
        return t;
    }
    static InitialTransform semicircle(double radius = 2.0) {
        InitialTransform t;
        t.radius_ = radius;
        return t;
    }
    static InitialTransform atom(double center = 0.0) {
        InitialTransform t;
        t.atom_ = center;
        t.is_atom_ = true;
        return t;
    }
    static InitialTransform custom(std::function<cplx(cplx)> fn) {
        InitialTransform t;
        t.fn_ = std::move(fn);
        return t;
    }

    cplx operator()(cplx u) const {
        if (fn_) return fn_(u);
        if (is_atom_) return 1.0 / (atom_ - u);
        if (!points_.empty()) {
            cplx s{0.0, 0.0};
            for (double x : points_) s += 1.0 / (x - u);
            return s / static_cast<double>(points_.size());
        }
        // semicircle on [-R, R]: m(z) = 2(-z + sqrt(z-R) sqrt(z+R)) / R^2
        const double r = radius_;
        const cplx w = std::sqrt(u - r) * std::sqrt(u + r);
        return 2.0 * (-u + w) / (r * r);
    }

  private:
    std::function<cplx(cplx)> fn_;
    std::vector<double> points_;
    double radius_ = 2.0;
    double atom_ = 0.0;
    bool is_atom_ = false;
};

// One characteristic curve: start u, current point z_s(u), transform value
// m_s(z_s(u)) carried along it, flow clock s. Frozen (alive=false) once the
// next step would push Im z below the floor.
struct Characteristic {
    cplx u;
    cplx z;
    cplx m;
    double s = 0.0;
    bool alive = true;
    double s_cross = -1.0;  // freeze time, -1 while alive
};

struct MeshSpec {
    double x_lo = -3.0, x_hi = 3.0;
    int nx = 201;
    double y_lo = 1e-3, y_hi = 1.0;  // log-spaced levels
    int ny = 20;
};

struct HydroParams {
    double dt = 1e-3;
    int n_mf = 2000;
    double eta_floor = 1e-6;
    MeshSpec mesh;
};

// Free characteristic flow (zero potential): m is constant along the flow and
// z_t = u - t m_0(u) exactly.
struct FreeFlowResult {
    cplx z;
    cplx m;
    bool crossed;
};
inline FreeFlowResult free_flow_oracle(cplx u, double t, const InitialTransform& m0) {
    if (!(u.imag() > 0.0)) throw std::invalid_argument("free_flow_oracle: Im u must be positive");
    const cplx m = m0(u);
    const cplx z = u - t * m;
    return {z, m, !(z.imag() > 0.0)};
}

// Hydrodynamic limit solved by characteristics:
//   dz/ds = -m - V'(z)/2,
//   dm/ds =  m d_z V'(z)/2 + integral of g(z,.) against mu_s,
// with the nonlocal integral approximated by a flat average of g over a
// deterministic mean-field particle system (noise-free drift, RK4).
// A mesh of characteristics supports evaluating m_t anywhere in the strip via
// Newton inversion of the flow map.
class HydroSolution {
  public:
    struct FlowResult {
        cplx z;
        cplx m;
        bool alive;
        double s_cross;  // -1 if alive
    };

    HydroSolution(Potential pot, InitialTransform m0, HydroParams params,
                  std::vector<double> mean_field_init, int threads = 0)
        : pot_(std::move(pot)), m0_(std::move(m0)), params_(params), threads_(threads) {
        if (params_.n_mf < 1) throw std::invalid_argument("hydro: n_mf must be >= 1");
        init_mean_field(std::move(mean_field_init));
        snapshots_.push_back(make_snapshot(mf_positions_));
        build_mesh(params_.mesh);
    }

    double t() const { return t_; }
    const Potential& potential() const { return pot_; }
    const HydroParams& params() const { return params_; }
    const std::vector<Characteristic>& mesh() const { return mesh_; }
    const std::vector<double>& mean_field_positions() const { return mf_positions_; }
    const InitialTransform& initial_transform() const { return m0_; }

    // Right-hand side of the coupled (z, m) system against the current
    // mean-field cloud.
    std::pair<cplx, cplx> rhs(const Characteristic& c) const {
        if (!c.alive) throw std::logic_error("rhs: characteristic is frozen");
        return rhs_at(c.z, c.m, snapshots_.back());
    }

    // One integrator step of size dt (defaults to params.dt).
    void advance(double dt = 0.0) {
        if (dt == 0.0) dt = params_.dt;
        if (!(dt > 0.0)) throw std::invalid_argument("advance: dt must be positive");
        extend_history(dt);
        const std::size_t seg = step_sizes_.size() - 1;
        parallel_for(mesh_.size(), [&](std::size_t i) {
            advance_characteristic(mesh_[i], seg);
        }, threads_);
        t_ += dt;
    }

    void advance_to(double t_target) {
        if (t_target < t_ - 1e-15)
            throw std::invalid_argument("advance_to: cannot integrate backwards");
        while (t_ < t_target - 1e-15) {
            advance(std::min(params_.dt, t_target - t_));
        }
        t_ = t_target;
    }

    // Replays the stored step sequence from an arbitrary start, bit-identical
    // to the mesh integration.
    FlowResult flow_from(cplx u) const {
        if (!(u.imag() > 0.0))
            throw std::invalid_argument("flow_from: Im u must be positive");
        Characteristic c{u, u, m0_(u), 0.0, true, -1.0};
        for (std::size_t seg = 0; seg < step_sizes_.size() && c.alive; ++seg)
            advance_characteristic(c, seg);
        return {c.z, c.m, c.alive, c.s_cross};
    }

    // m_t(w) through the inverse flow: Newton iteration on u -> z_t(u) seeded
    // from the nearest mesh characteristic. Residual tolerance 1e-9.
    cplx evaluate_m(cplx w) const { return evaluate_m_impl(w, nullptr); }

    // Preimage of w under the flow map: the u with |z_t(u) - w| <= 1e-9.
    cplx preimage(cplx w) const {
        cplx u;
        evaluate_m_impl(w, nullptr, &u);
        return u;
    }

    // Batched variant: consecutive queries reuse the previous preimage as an
    // extra Newton seed, which is what density scans want.
    std::vector<cplx> evaluate_m_many(std::span<const cplx> ws) const {
        std::vector<cplx> out(ws.size());
        cplx cont{0.0, 0.0};
        bool have_cont = false;
        for (std::size_t i = 0; i < ws.size(); ++i) {
            const cplx* hint = have_cont ? &cont : nullptr;
            out[i] = evaluate_m_impl(ws[i], hint, &cont);
            have_cont = true;
        }
        return out;
    }

    // Doubles the mesh resolution in both directions and re-integrates the
    // new characteristics through the stored history.
    void refine_mesh() {
        MeshSpec m = current_mesh_;
        m.nx = m.nx * 2 - 1;
        m.ny = m.ny * 2 - 1;
        build_mesh(m);
    }

    struct Diagnostics {
        long frozen = 0;
    };
    Diagnostics diagnostics() const {
        Diagnostics d;
        for (const auto& c : mesh_)
            if (!c.alive) ++d.frozen;
        return d;
    }

  private:
    struct Snapshot {
        std::vector<double> x;
        std::vector<double> ax;  // a(x) = V' chi at the particle positions
        double max_abs = 0.0;
    };

    Snapshot make_snapshot(const std::vector<double>& x) const {
        Snapshot s;
        s.x = x;
        s.ax.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            s.ax[i] = pot_.axis_value(x[i]);
            s.max_abs = std::max(s.max_abs, std::abs(x[i]));
        }
        return s;
    }

    std::pair<cplx, cplx> rhs_at(cplx z, cplx m, const Snapshot& snap) const {
        const KernelAtZ k(pot_, z);
        cplx nonlocal{0.0, 0.0};
        if (!(k.zero_kernel && snap.max_abs <= k.plateau)) {
            cplx acc{0.0, 0.0};
            for (std::size_t i = 0; i < snap.x.size(); ++i) acc += k.eval(snap.x[i], snap.ax[i]);
            nonlocal = acc / static_cast<double>(snap.x.size());
        }
        const cplx dz = -m - 0.5 * k.ext;
        const cplx dm = 0.5 * m * k.ext_dz + nonlocal;
        return {dz, dm};
    }

    // Classical RK4 over one stored segment; stages use the start, midpoint
    // and end snapshots of the mean-field flow.
    void advance_characteristic(Characteristic& c, std::size_t seg) const {
        if (!c.alive) return;
        const double h = step_sizes_[seg];
        const Snapshot& s0 = snapshots_[2 * seg];
        const Snapshot& sm = snapshots_[2 * seg + 1];
        const Snapshot& s1 = snapshots_[2 * seg + 2];
        const auto [k1z, k1m] = rhs_at(c.z, c.m, s0);
        const auto [k2z, k2m] = rhs_at(c.z + 0.5 * h * k1z, c.m + 0.5 * h * k1m, sm);
        const auto [k3z, k3m] = rhs_at(c.z + 0.5 * h * k2z, c.m + 0.5 * h * k2m, sm);
        const auto [k4z, k4m] = rhs_at(c.z + h * k3z, c.m + h * k3m, s1);
        const cplx zn = c.z + (h / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        const cplx mn = c.m + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
        if (!(zn.imag() > params_.eta_floor)) {
            c.alive = false;
            c.s_cross = c.s;
            return;
        }
        c.z = zn;
        c.m = mn;
        c.s += h;
    }

    // --- mean-field particle flow -------------------------------------------

    std::vector<double> mf_drift(const std::vector<double>& x) const {
        const std::size_t n = x.size();
        std::vector<double> d(n, 0.0);
        const double inv_n = 1.0 / static_cast<double>(n);
        detail::repulsion_sums(x.data(), n, d.data());
        for (std::size_t i = 0; i < n; ++i) d[i] = d[i] * inv_n - 0.5 * pot_.axis_value(x[i]);
        return d;
    }

    std::vector<double> mf_rk4(const std::vector<double>& x, double h) const {
        const std::size_t n = x.size();
        const std::vector<double> k1 = mf_drift(x);
        std::vector<double> tmp(n);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        const std::vector<double> k2 = mf_drift(tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        const std::vector<double> k3 = mf_drift(tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
        const std::vector<double> k4 = mf_drift(tmp);
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        std::sort(out.begin(), out.end());
        return out;
    }

    void init_mean_field(std::vector<double> init) {
        std::sort(init.begin(), init.end());
        // split coincident groups: a point mass of weight w spreads like a
        // semicircle of radius 2 sqrt(w s) for small s; seed at s = dt/2
        std::vector<double> spread;
        spread.reserve(init.size());
        const double n_total = static_cast<double>(init.size());
        std::size_t i = 0;
        while (i < init.size()) {
            std::size_t j = i;
            while (j + 1 < init.size() && init[j + 1] == init[i]) ++j;
            const std::size_t k = j - i + 1;
            if (k == 1) {
                spread.push_back(init[i]);
            } else {
                const double w = static_cast<double>(k) / n_total;
                const double r = 2.0 * std::sqrt(w * 0.5 * params_.dt);
                for (std::size_t q = 0; q < k; ++q) {
                    const double p = (static_cast<double>(q) + 0.5) / static_cast<double>(k);
                    spread.push_back(init[i] + r * semicircle_quantile_unit(p));
                }
            }
            i = j + 1;
        }
        std::sort(spread.begin(), spread.end());
        mf_positions_ = std::move(spread);
        mf_frozen_ = pot_.interaction_kernel_vanishes();
    }

    static double semicircle_quantile_unit(double p) {
        // inverse CDF of 2 sqrt(1-x^2)/pi by bisection
        double lo = -1.0, hi = 1.0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double cdf = 0.5 + (mid * std::sqrt(1.0 - mid * mid) + std::asin(mid)) / M_PI;
            (cdf < p ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    void extend_history(double dt) {
        step_sizes_.push_back(dt);
        if (mf_frozen_) {
            // affine V': the kernel average is skipped on the plateau, so the
            // cloud is kept at its initial positions
            snapshots_.push_back(snapshots_.front());
            snapshots_.push_back(snapshots_.front());
            return;
        }
        std::vector<double> mid = mf_rk4(mf_positions_, 0.5 * dt);
        std::vector<double> end = mf_rk4(mid, 0.5 * dt);
        snapshots_.push_back(make_snapshot(mid));
        snapshots_.push_back(make_snapshot(end));
        mf_positions_ = std::move(end);
    }

    // --- mesh and inversion --------------------------------------------------

    void build_mesh(const MeshSpec& spec) {
        current_mesh_ = spec;
        if (spec.nx < 2 || spec.ny < 1)
            throw std::invalid_argument("hydro: mesh needs nx >= 2, ny >= 1");
        if (!(spec.y_lo > 0.0) || !(spec.y_hi >= spec.y_lo))
            throw std::invalid_argument("hydro: mesh heights must be positive");
        mesh_.clear();
        mesh_.reserve(static_cast<std::size_t>(spec.nx) * spec.ny);
        for (int iy = 0; iy < spec.ny; ++iy) {
            const double fy = spec.ny == 1 ? 0.0 : static_cast<double>(iy) / (spec.ny - 1);
            const double y = spec.y_lo * std::pow(spec.y_hi / spec.y_lo, fy);
            for (int ix = 0; ix < spec.nx; ++ix) {
                const double x = spec.x_lo + (spec.x_hi - spec.x_lo) * ix / (spec.nx - 1);
                const cplx u{x, y};
                mesh_.push_back(Characteristic{u, u, m0_(u), 0.0, true, -1.0});
            }
        }
        parallel_for(mesh_.size(), [&](std::size_t i) {
            for (std::size_t seg = 0; seg < step_sizes_.size() && mesh_[i].alive; ++seg)
                advance_characteristic(mesh_[i], seg);
        }, threads_);
    }

    void check_coverage(cplx w) const {
        if (!(w.imag() > params_.eta_floor))
            throw coverage_error("evaluate_m: Im w must exceed eta_floor");
        double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
        double y_hi = 0.0;
        bool any_alive = false;
        for (const auto& c : mesh_) {
            if (!c.alive) continue;
            any_alive = true;
            x_lo = std::min(x_lo, c.z.real());
            x_hi = std::max(x_hi, c.z.real());
            y_hi = std::max(y_hi, c.z.imag());
        }
        if (!any_alive) throw coverage_error("evaluate_m: no alive characteristics");
        const double margin = 2.0 * (current_mesh_.x_hi - current_mesh_.x_lo) /
                              std::max(1, current_mesh_.nx - 1);
        if (w.real() < x_lo - margin || w.real() > x_hi + margin ||
            w.imag() > y_hi * 1.05 + 1e-12)
            throw coverage_error("evaluate_m: query outside the mesh hull");
    }

    cplx evaluate_m_impl(cplx w, const cplx* continuation_seed, cplx* found_u = nullptr) const {
        check_coverage(w);
        // candidate seeds: nearest alive mesh characteristics, plus the
        // previous preimage from a batched scan
        cplx seed{0.0, 0.0};
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : mesh_) {
            if (!c.alive) continue;
            const double d = std::abs(c.z - w);
            if (d < best) {
                best = d;
                seed = c.u;
            }
        }
        if (continuation_seed) {
            const FlowResult r = flow_from(*continuation_seed);
            if (r.alive && std::abs(r.z - w) < best) seed = *continuation_seed;
        }
        const double tol = 1e-9;
        cplx u = seed;
        FlowResult cur = flow_from(u);
        double res = cur.alive ? std::abs(cur.z - w) : std::numeric_limits<double>::infinity();
        double best_res = res;
        for (int iter = 0; iter < 50; ++iter) {
            if (cur.alive && res <= tol) {
                if (found_u) *found_u = u;
                return cur.m;
            }
            const double du = 1e-7 * (1.0 + std::abs(u));
            const FlowResult fx = flow_from(u + cplx(du, 0.0));
            const FlowResult fy = flow_from(u + cplx(0.0, du));
            if (!fx.alive || !fy.alive || !cur.alive) {
                // walk up toward longer-lived starts and retry
                u += cplx(0.0, std::max(du, 0.25 * u.imag()));
                cur = flow_from(u);
                res = cur.alive ? std::abs(cur.z - w) : std::numeric_limits<double>::infinity();
                continue;
            }
            // 2x2 real Newton step on u -> z_t(u)
            const double a11 = (fx.z.real() - cur.z.real()) / du;
            const double a21 = (fx.z.imag() - cur.z.imag()) / du;
            const double a12 = (fy.z.real() - cur.z.real()) / du;
            const double a22 = (fy.z.imag() - cur.z.imag()) / du;
            const double det = a11 * a22 - a12 * a21;
            if (det == 0.0 || !std::isfinite(det))
                throw inversion_error("evaluate_m: singular flow Jacobian", best_res);
            const double rx = cur.z.real() - w.real();
            const double ry = cur.z.imag() - w.imag();
            const cplx step{-(a22 * rx - a12 * ry) / det, -(-a21 * rx + a11 * ry) / det};
            bool accepted = false;
            for (double lambda = 1.0; lambda >= 1.0 / 1024.0; lambda *= 0.5) {
                const cplx trial = u + lambda * step;
                if (!(trial.imag() > 0.0)) continue;
                const FlowResult ft = flow_from(trial);
                if (!ft.alive) continue;
                const double rt = std::abs(ft.z - w);
                if (rt < res || rt <= tol) {
                    u = trial;
                    cur = ft;
                    res = rt;
                    best_res = std::min(best_res, rt);
                    accepted = true;
                    break;
                }
            }
            if (!accepted)
                throw inversion_error("evaluate_m: Newton stalled at residual " +
                                          std::to_string(res), res);
        }
        if (cur.alive && res <= tol) {
            if (found_u) *found_u = u;
            return cur.m;
        }
        throw inversion_error("evaluate_m: no convergence in 50 iterations, residual " +
                                  std::to_string(res), res);
    }

    Potential pot_;
    InitialTransform m0_;
    HydroParams params_;
    int threads_ = 0;
    double t_ = 0.0;
    std::vector<Characteristic> mesh_;
    MeshSpec current_mesh_;
    std::vector<double> mf_positions_;
    bool mf_frozen_ = false;
    std::vector<double> step_sizes_;
    std::vector<Snapshot> snapshots_;  // 2k: start of step k, 2k+1: midpoint; last: final
};

}  // namespace dbm
