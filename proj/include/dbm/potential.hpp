#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbm/jet.hpp"

namespace dbm {

using cplx = std::complex<double>;

// Confining potential V together with the machinery the hydrodynamic side
// needs: analytic derivatives V..V'''', the curvature floor kappa with
// V'' >= -2*kappa, the cutoff radius b_cut, the smooth bump chi, the
// quasi-analytic extension of V' into the plane and the difference kernel
// g(z,x) driving the nonlocal term.
//
// Potentials are polynomials of degree <= 8 given by ascending coefficients.
// Instances are immutable after construction and safe to share across threads.
class Potential {
  public:
    static constexpr double kDiagEps = 1e-6;   // diagonal regularization of g
    static constexpr double kFdStep = 1e-5;    // central difference for d_x g
    static constexpr int kMaxDegree = 8;

    Potential(std::vector<double> coeffs_ascending, double b_cut = 4.0,
              double kappa = 0.0, std::string kind = "poly")
        : coeffs_(std::move(coeffs_ascending)),
          b_cut_(b_cut),
          kappa_(kappa),
          kind_(std::move(kind)) {
        if (coeffs_.empty()) coeffs_.push_back(0.0);
        if (static_cast<int>(coeffs_.size()) - 1 > kMaxDegree)
            throw std::invalid_argument("potential: polynomial degree exceeds 8");
        if (!(b_cut_ > 1.0))
            throw std::invalid_argument("potential: b_cut must exceed 1");
        if (!(kappa_ >= 0.0))
            throw std::invalid_argument("potential: kappa must be nonnegative");
        derivs_[0] = coeffs_;
        for (int k = 1; k <= 4; ++k) derivs_[k] = differentiate(derivs_[k - 1]);
        validate();
    }

    static Potential quadratic(double b_cut = 4.0, double kappa = 0.0) {
        return Potential({0.0, 0.0, 0.5}, b_cut, kappa, "quadratic");
    }
    static Potential quartic(double b_cut = 4.0, double kappa = 0.0) {
        return Potential({0.0, 0.0, 0.0, 0.0, 0.25}, b_cut, kappa, "quartic");
    }
    static Potential zero(double b_cut = 4.0) {
        return Potential({0.0}, b_cut, 0.0, "zero");
    }
    static Potential polynomial(std::vector<double> coeffs, double b_cut = 4.0,
                                double kappa = 0.0) {
        return Potential(std::move(coeffs), b_cut, kappa, "poly");
    }

    // k-th derivative of V at x, k = 0..4.
    double v(double x, int k) const {
        return horner(derivs_[static_cast<std::size_t>(k)], x);
    }
    double b_cut() const { return b_cut_; }
    double kappa() const { return kappa_; }
    const std::string& kind() const { return kind_; }
    const std::vector<double>& coeffs() const { return coeffs_; }

    // V' is affine, so g vanishes identically wherever all cutoffs sit on
    // their plateau. Lets hot loops skip the kernel sum for quadratic/zero V.
    bool interaction_kernel_vanishes() const { return coeffs_.size() <= 3; }

    // Smooth bump: 1 on [-2b, 2b], 0 outside [-2b-1, 2b+1].
    // chi(y) = S(2b+1-|y|) / (S(2b+1-|y|) + S(|y|-2b)), S(t) = exp(-1/t) 1_{t>0}.
    double chi(double y, int order = 0) const {
        const detail::Jet3 j = chi_jet(y);
        switch (order) {
            case 0: return j.v;
            case 1: return j.d1;
            case 2: return j.d2;
            case 3: return j.d3;
            default: throw std::invalid_argument("chi: order must be 0..3");
        }
    }

    // a(x) = V'(x) chi(x) and its first three x-derivatives.
    struct AxisFamily {
        double a0, a1, a2, a3;
    };
    AxisFamily axis(double x) const {
        const double p = 2.0 * b_cut_;
        if (std::abs(x) <= p) {  // plateau: chi == 1 exactly
            return {v(x, 1), v(x, 2), v(x, 3), v(x, 4)};
        }
        const detail::Jet3 vp{v(x, 1), v(x, 2), v(x, 3), v(x, 4)};
        const detail::Jet3 a = vp * chi_jet(x);
        return {a.v, a.d1, a.d2, a.d3};
    }
    double axis_value(double x) const {
        const double p = 2.0 * b_cut_;
        return std::abs(x) <= p ? v(x, 1)
                                : v(x, 1) * chi_jet(x).v;
    }

    // Quasi-analytic extension of V' of order three,
    //   V'(x+iy) = (a(x) + i y a'(x) - y^2/2 a''(x)) chi(y).
    cplx extended_v_prime(cplx z) const {
        require_finite(z);
        const double x = z.real(), y = z.imag();
        const double cy = chi_jet(y).v;
        if (cy == 0.0) return {0.0, 0.0};
        const AxisFamily a = axis(x);
        return cplx(a.a0 - 0.5 * y * y * a.a2, y * a.a1) * cy;
    }

    // d_z of the extension, with d_z = (d_x - i d_y)/2:
    //   (a' + i y a'' - y^2/4 a''') chi(y) - (i/2) chi'(y) (a + i y a' - y^2/2 a'').
    cplx extended_v_prime_dz(cplx z) const {
        require_finite(z);
        const double x = z.real(), y = z.imag();
        const detail::Jet3 cy = chi_jet(y);
        if (cy.v == 0.0 && cy.d1 == 0.0) return {0.0, 0.0};
        const AxisFamily a = axis(x);
        const cplx lead(a.a1 - 0.25 * y * y * a.a3, y * a.a2);
        const cplx ext(a.a0 - 0.5 * y * y * a.a2, y * a.a1);
        return lead * cy.v - cplx(0.0, 0.5) * cy.d1 * ext;
    }

    // g(z,x) = (V'(x) - V'(z) - (x-z) d_z V'(z)) / (2 (x-z)^2), with the
    // second-order Taylor form V'''/4 + (x-z) V''''/12 inside diag_eps of the
    // diagonal. g(x,x) = V'''(x)/4.
    cplx kernel_g(cplx z, double x) const {
        require_finite(z);
        if (!std::isfinite(x)) throw std::domain_error("kernel_g: non-finite x");
        const cplx dx = x - z;
        if (std::abs(dx) < kDiagEps) {
            const double xt = z.real();
            return v(xt, 3) / 4.0 + dx * (v(xt, 4) / 12.0);
        }
        const cplx num = axis_value(x) - extended_v_prime(z) - dx * extended_v_prime_dz(z);
        return num / (2.0 * dx * dx);
    }

    // Order-two quasi-analytic extension of g(z,.):
    //   gtilde(z, x+iy) = (g(z,x) + i y d_x g(z,x)) chi(y),
    // with d_x g by central difference.
    cplx kernel_g_tilde(cplx z, cplx w) const {
        require_finite(w);
        const double x = w.real(), y = w.imag();
        const double cy = chi_jet(y).v;
        if (cy == 0.0) return {0.0, 0.0};
        const cplx g = kernel_g(z, x);
        if (y == 0.0) return g;
        const cplx gx = (kernel_g(z, x + kFdStep) - kernel_g(z, x - kFdStep)) / (2.0 * kFdStep);
        return (g + cplx(0.0, y) * gx) * cy;
    }

    // sup |a'| over the cutoff window; used for the Im V' <= C |Im z| bound
    // and for the flow-comparison constant estimates.
    double axis_c1_bound() const { return c1_bound_; }
    // Reported estimate of the constant in the flow comparison inequalities.
    double flow_constant() const { return flow_constant_; }

  private:
    static std::vector<double> differentiate(const std::vector<double>& c) {
        std::vector<double> d;
        for (std::size_t k = 1; k < c.size(); ++k)
            d.push_back(static_cast<double>(k) * c[k]);
        if (d.empty()) d.push_back(0.0);
        return d;
    }
    static double horner(const std::vector<double>& c, double x) {
        double s = 0.0;
        for (std::size_t k = c.size(); k-- > 0;) s = s * x + c[k];
        return s;
    }
    static void require_finite(cplx z) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw std::domain_error("potential: non-finite complex argument");
    }

    detail::Jet3 chi_jet(double y) const {
        const double p = 2.0 * b_cut_;
        const double s = std::abs(y);
        // guard bands keep exp(-1/t) jets away from the t=0 overflow corner
        if (s <= p + 1e-9) return detail::Jet3::constant(1.0);
        if (s >= p + 1.0 - 1e-9) return detail::Jet3::constant(0.0);
        const detail::Jet3 t_out{p + 1.0 - s, -1.0, 0.0, 0.0};
        const detail::Jet3 t_in{s - p, 1.0, 0.0, 0.0};
        const detail::Jet3 minus_one = detail::Jet3::constant(-1.0);
        const detail::Jet3 s_out = detail::exp(minus_one / t_out);
        const detail::Jet3 s_in = detail::exp(minus_one / t_in);
        detail::Jet3 c = s_out / (s_out + s_in);
        if (y < 0.0) {  // chain rule through |y|
            c.d1 = -c.d1;
            c.d3 = -c.d3;
        }
        return c;
    }

    void validate() {
        const double lo = -2.0 * b_cut_ - 1.0, hi = 2.0 * b_cut_ + 1.0;
        const int n = 4001;
        double c1 = 0.0, c2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = lo + (hi - lo) * i / (n - 1);
            for (int k = 0; k <= 4; ++k) {
                if (!std::isfinite(v(x, k)))
                    throw std::invalid_argument("potential: non-finite derivative on cutoff window");
            }
            if (v(x, 2) < -2.0 * kappa_ - 1e-12)
                throw std::invalid_argument(
                    "potential: V'' drops below -2*kappa on the cutoff window");
            const AxisFamily a = axis(x);
            c1 = std::max(c1, std::abs(a.a1));
            c2 = std::max(c2, std::abs(a.a2));
        }
        c1_bound_ = c1;
        flow_constant_ = std::max(0.5 * c1 + 0.5 * c2 * (1.0 + 3.0 * b_cut_), 0.5);
    }

    std::vector<double> coeffs_;
    std::array<std::vector<double>, 5> derivs_;
    double b_cut_;
    double kappa_;
    std::string kind_;
    double c1_bound_ = 0.0;
    double flow_constant_ = 0.0;
};

// Precomputed z-dependent parts of g(z, .) for averaging the kernel over a
// particle cloud. eval() takes the particle position and its precomputed
// axis value a(x) so snapshot-level work is shared across all z.
struct KernelAtZ {
    const Potential* pot;
    cplx z;
    cplx ext;     // V'(z)
    cplx ext_dz;  // d_z V'(z)
    double plateau;
    bool zero_kernel;

    KernelAtZ(const Potential& p, cplx z_)
        : pot(&p), z(z_), ext(p.extended_v_prime(z_)), ext_dz(p.extended_v_prime_dz(z_)),
          plateau(2.0 * p.b_cut()) {
        // affine V' makes the numerator vanish identically while z and x sit
        // on the cutoff plateaus
        zero_kernel = p.interaction_kernel_vanishes() &&
                      std::abs(z_.real()) < plateau && std::abs(z_.imag()) < plateau;
    }

    cplx eval(double x, double axis_value_x) const {
        if (zero_kernel && std::abs(x) <= plateau) return {0.0, 0.0};
        const cplx dx = x - z;
        if (std::abs(dx) < Potential::kDiagEps) {
            const double xt = z.real();
            return pot->v(xt, 3) / 4.0 + dx * (pot->v(xt, 4) / 12.0);
        }
        const cplx num = axis_value_x - ext - dx * ext_dz;
        return num / (2.0 * dx * dx);
    }
};

}  // namespace dbm
