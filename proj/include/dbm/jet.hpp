#pragma once

#include <cmath>

namespace dbm::detail {

// Truncated Taylor scalar carrying a value and its first three derivatives
// with respect to a single real parameter. Used to evaluate the cutoff bump
// and its derivatives exactly instead of hand-expanding quotient rules.
struct Jet3 {
    double v = 0.0;   // f
    double d1 = 0.0;  // f'
    double d2 = 0.0;  // f''
    double d3 = 0.0;  // f'''

    static Jet3 constant(double c) { return {c, 0.0, 0.0, 0.0}; }
    static Jet3 variable(double x) { return {x, 1.0, 0.0, 0.0}; }
};

inline Jet3 operator+(const Jet3& a, const Jet3& b) {
    return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d3 + b.d3};
}

inline Jet3 operator-(const Jet3& a, const Jet3& b) {
    return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d3 - b.d3};
}

inline Jet3 operator*(const Jet3& a, const Jet3& b) {
    return {a.v * b.v,
            a.d1 * b.v + a.v * b.d1,
            a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2,
            a.d3 * b.v + 3.0 * a.d2 * b.d1 + 3.0 * a.d1 * b.d2 + a.v * b.d3};
}

// Quotient h = a/b from h*b = a, solved derivative by derivative.
inline Jet3 operator/(const Jet3& a, const Jet3& b) {
    Jet3 h;
    h.v = a.v / b.v;
    h.d1 = (a.d1 - h.v * b.d1) / b.v;
    h.d2 = (a.d2 - 2.0 * h.d1 * b.d1 - h.v * b.d2) / b.v;
    h.d3 = (a.d3 - 3.0 * h.d2 * b.d1 - 3.0 * h.d1 * b.d2 - h.v * b.d3) / b.v;
    return h;
}

inline Jet3 exp(const Jet3& f) {
    const double e = std::exp(f.v);
    return {e,
            e * f.d1,
            e * (f.d2 + f.d1 * f.d1),
            e * (f.d3 + 3.0 * f.d1 * f.d2 + f.d1 * f.d1 * f.d1)};
}

}  // namespace dbm::detail
