#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace dbm {

// Recursive adaptive Simpson. `leaves`, when supplied, receives the final
// panels in left-to-right order as (a, b, fa, fm, fb, mass).
struct SimpsonLeaf {
    double a, b, fa, fm, fb, mass;
};

namespace detail {

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double m,
                                   double b, double fa, double fm, double fb, double whole,
                                   double tol, int depth, std::vector<SimpsonLeaf>* leaves) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        const double v = left + right + delta / 15.0;
        if (leaves) {
            leaves->push_back({a, m, fa, flm, fm, left + (left + right - whole) / 30.0});
            leaves->push_back({m, b, fm, frm, fb, right + (left + right - whole) / 30.0});
        }
        return v;
    }
    return adaptive_simpson_rec(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1, leaves) +
           adaptive_simpson_rec(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1, leaves);
}

}  // namespace detail

// `splits` uniform panels are laid down before adaptive refinement; sparse
// features (isolated bumps, oscillations) would otherwise be invisible to
// the first Simpson stencil and accepted as zero.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int max_depth = 40,
                               std::vector<SimpsonLeaf>* leaves = nullptr, int splits = 16) {
    if (!(b > a)) return 0.0;
    if (splits < 1) splits = 1;
    const double chunk_tol = tol / splits;
    double total = 0.0;
    for (int k = 0; k < splits; ++k) {
        const double ca = a + (b - a) * k / splits;
        const double cb = a + (b - a) * (k + 1) / splits;
        const double m = 0.5 * (ca + cb);
        const double fa = f(ca), fm = f(m), fb = f(cb);
        const double whole = (cb - ca) / 6.0 * (fa + 4.0 * fm + fb);
        total += detail::adaptive_simpson_rec(f, ca, m, cb, fa, fm, fb, whole, chunk_tol,
                                              max_depth, leaves);
    }
    return total;
}

// Monotone cumulative table built from adaptive Simpson panels; inverts the
// primitive with bisection over panels plus local Simpson masses inside one.
class CumulativeTable {
  public:
    CumulativeTable(const std::function<double(double)>& f, double a, double b, double tol) {
        std::vector<SimpsonLeaf> leaves;
        total_ = adaptive_simpson(f, a, b, tol, 40, &leaves);
        nodes_.push_back(a);
        cum_.push_back(0.0);
        double acc = 0.0;
        for (const auto& leaf : leaves) {
            acc += leaf.mass;
            nodes_.push_back(leaf.b);
            cum_.push_back(acc);
            leaves_.push_back(leaf);
        }
    }

    double total() const { return total_; }
    double a() const { return nodes_.front(); }
    double b() const { return nodes_.back(); }

    double cdf(double x) const {
        if (x <= nodes_.front()) return 0.0;
        if (x >= nodes_.back()) return cum_.back();
        const std::size_t k = panel_index(x);
        return cum_[k] + partial_mass(leaves_[k], x);
    }

    // smallest x with cdf(x) >= p (p in [0, total])
    double quantile(double p) const {
        if (p <= 0.0) return nodes_.front();
        if (p >= cum_.back()) return nodes_.back();
        std::size_t lo = 0, hi = leaves_.size();
        while (lo + 1 < hi) {
            const std::size_t mid = (lo + hi) / 2;
            (cum_[mid] <= p ? lo : hi) = mid;
        }
        const SimpsonLeaf& leaf = leaves_[lo];
        double target = p - cum_[lo];
        double xa = leaf.a, xb = leaf.b;
        for (int it = 0; it < 60; ++it) {
            const double xm = 0.5 * (xa + xb);
            (partial_mass(leaf, xm) < target ? xa : xb) = xm;
        }
        return 0.5 * (xa + xb);
    }

  private:
    std::size_t panel_index(double x) const {
        std::size_t lo = 0, hi = leaves_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (x < leaves_[mid].a)
                hi = mid - 1;
            else if (x > leaves_[mid].b)
                lo = mid + 1;
            else
                lo = hi = mid;
        }
        return lo;
    }

    // mass of [leaf.a, x] from the quadratic interpolant of f on the panel
    static double partial_mass(const SimpsonLeaf& leaf, double x) {
        const double h = leaf.b - leaf.a;
        if (h <= 0.0) return 0.0;
        const double s = (x - leaf.a) / h;  // in [0,1]
        // Lagrange quadratic through (0, fa), (1/2, fm), (1, fb), integrated
        const double c0 = leaf.fa;
        const double c1 = -3.0 * leaf.fa + 4.0 * leaf.fm - leaf.fb;
        const double c2 = 2.0 * leaf.fa - 4.0 * leaf.fm + 2.0 * leaf.fb;
        return h * (c0 * s + 0.5 * c1 * s * s + c2 * s * s * s / 3.0);
    }

    std::vector<double> nodes_;
    std::vector<double> cum_;
    std::vector<SimpsonLeaf> leaves_;
    double total_ = 0.0;
};

}  // namespace dbm
