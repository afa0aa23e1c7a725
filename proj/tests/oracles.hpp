#pragma once

// Reference values computed by routes independent of the library internals:
// the Marchenko-Pastur transform straight from its quadratic, the closed-form
// bulk density, and a substitution-based bulk integrator. Tests compare
// library output against these, never against the library itself.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

// Bulk edges (1 -+ sqrt(c))^2 of the Marchenko-Pastur law with ratio c.
inline std::pair<double, double> mp_edges(double c) {
    const double s = std::sqrt(c);
    return {(1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s)};
}

// Stieltjes transform of the N-side Marchenko-Pastur limit (bulk mass
// min(1, c), atom 1-c at zero when c < 1), as the root of
// z m^2 + (z + 1 - c) m + 1 = 0 with Im(m) matching the sign of Im(z).
// Only defined off the real axis, which is all the tests need.
inline cplx mp_m(double c, cplx z) {
    const cplx b = z + (1.0 - c);
    const cplx disc = std::sqrt(b * b - 4.0 * z);
    const cplx r1 = (-b + disc) / (2.0 * z);
    const cplx r2 = (-b - disc) / (2.0 * z);
    if (z.imag() > 0.0) return r1.imag() > 0.0 ? r1 : r2;
    return r1.imag() < 0.0 ? r1 : r2;
}

// Closed-form bulk density of the same law: sqrt((b-x)(x-a)) / (2 pi x)
// on [a, b], zero outside. The zero atom (c < 1) is not part of this.
inline double mp_density(double c, double x) {
    const auto [a, b] = mp_edges(c);
    if (x <= a || x >= b) return 0.0;
    return std::sqrt((b - x) * (x - a)) / (2.0 * std::numbers::pi * x);
}

// Integral of phi against the bulk density via x = mid + rad*cos(theta),
// which turns the edge square roots into sin^2 and makes the midpoint rule
// spectrally accurate for phi analytic near [a, b]:
//   int phi rho dx = (rad^2 / 2K) sum_j phi(x_j) sin^2(theta_j) / x_j.
template <class Phi>
inline double mp_bulk_integral(double c, Phi&& phi, int K = 4000) {
    const auto [a, b] = mp_edges(c);
    const double mid = 0.5 * (a + b);
    const double rad = 0.5 * (b - a);
    double acc = 0.0;
    for (int j = 0; j < K; ++j) {
        const double th = std::numbers::pi * (j + 0.5) / K;
        const double s = std::sin(th);
        acc += phi(mid + rad * std::cos(th)) * s * s / (mid + rad * std::cos(th));
    }
    return acc * rad * rad / (2.0 * K);
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i)
        out[i] = lo + (hi - lo) * i / (n - 1.0);
    return out;
}

} // namespace oracle
