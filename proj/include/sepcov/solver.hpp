#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "errors.hpp"
#include "spectral_measure.hpp"

namespace sepcov {

// Population model for the separable sample covariance matrix
// (1/N) T2^{1/2} X T1 X' T2^{1/2}: dimension ratio c = n/N and the limiting
// spectral measures of the two factors. T1 may be sign-indefinite, T2 must
// be positive semidefinite, and both need some mass away from zero.
struct ModelParams {
    double c;
    SpectralMeasure h1;
    SpectralMeasure h2;

    ModelParams(double c_, SpectralMeasure h1_, SpectralMeasure h2_)
        : c(c_), h1(std::move(h1_)), h2(std::move(h2_)) {
        if (!std::isfinite(c) || c <= 0.0)
            throw DomainViolation("dimension ratio c must be positive and finite");
        if (!h2.nonnegative())
            throw DomainViolation("h2 must be supported on [0, inf)");
        if (h1.max_value() == 0.0 && h1.min_value() == 0.0)
            throw DomainViolation("h1 must not be a point mass at 0");
        if (h2.max_value() <= 0.0)
            throw DomainViolation("h2 must put mass on (0, inf)");
    }
};

// Solved transforms at one spectral parameter z. m is the Stieltjes
// transform of the limit law of the N x N sample matrix (carrying the atom
// at zero when c < 1), m_under the companion for the n x n one; g1, g2 are
// the auxiliary transforms the coupled self-consistent equations are
// written in. residual is the largest defect left when plugging the
// returned values back into those equations.
struct StieltjesTriple {
    cplx z{};
    cplx m{};
    cplx g1{};
    cplx g2{};
    cplx m_under{};
    double residual = 0.0;
    long iterations = 0;
};

struct SolverConfig {
    double tol = 1e-12;
    long max_iter = 20000;
    double damping = 0.5;
    std::optional<StieltjesTriple> warm_start;
};

struct SupportBounds {
    double lower = 0.0;
    double upper = 0.0;
    double width() const { return upper - lower; }
};

namespace detail {

constexpr double pole_guard = 1e-10;

// integral of x / (1 + g x) against mu; reports a near-pole instead of
// letting the iterate blow up
inline std::optional<cplx> weighted_resolvent(const SpectralMeasure& mu, cplx g) {
    cplx acc(0.0, 0.0);
    for (const Atom& a : mu.atoms()) {
        const cplx den = 1.0 + g * a.value;
        if (std::abs(den) < pole_guard) return std::nullopt;
        acc += a.weight * a.value / den;
    }
    return acc;
}

inline cplx plain_resolvent(const SpectralMeasure& mu, cplx g) {
    cplx acc(0.0, 0.0);
    for (const Atom& a : mu.atoms()) acc += a.weight / (1.0 + g * a.value);
    return acc;
}

// Branch selection: for Im z > 0 the analytic solution is the unique one
// with Im m > 0, Im(z g1) > 0, Im g2 > 0.
inline bool in_solution_set(cplx z, cplx m, cplx g1, cplx g2) {
    return m.imag() > 0.0 && (z * g1).imag() > 0.0 && g2.imag() > 0.0;
}

inline StieltjesTriple conj_triple(StieltjesTriple t) {
    t.z = std::conj(t.z);
    t.m = std::conj(t.m);
    t.g1 = std::conj(t.g1);
    t.g2 = std::conj(t.g2);
    t.m_under = std::conj(t.m_under);
    return t;
}

} // namespace detail

// Solve the coupled self-consistent equations at one z off the real axis.
//
// Iteration: from the current g2, set g1 = -(c/z) * int x/(1+g2 x) dH1
// (that equation is explicit in g1), then move g2 a damped step toward
// -(1/z) * int y/(1+g1 y) dH2. A step that leaves the analytic solution
// set, or lands on a pole of either integrand, is retaken with the damping
// halved. Lower half-plane arguments are solved by conjugation symmetry.
inline StieltjesTriple solve_at(const ModelParams& p, cplx z,
                                const SolverConfig& cfg = {}) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) || z.imag() == 0.0)
        throw DomainViolation("solve_at needs finite z with Im z != 0");
    if (!(cfg.tol > 0.0) || cfg.max_iter < 1 || !(cfg.damping > 0.0) ||
        cfg.damping > 1.0)
        throw ConfigError("solver config: tol > 0, max_iter >= 1, damping in (0,1]");

    if (z.imag() < 0.0) {
        SolverConfig mirrored = cfg;
        if (mirrored.warm_start)
            mirrored.warm_start = detail::conj_triple(*mirrored.warm_start);
        return detail::conj_triple(solve_at(p, std::conj(z), mirrored));
    }

    const double c = p.c;
    const cplx zinv = 1.0 / z;
    const double resid_scale = std::max(1.0, 1.0 / c); // defect in the first
                                                       // equation is 1/c
                                                       // times the third's

    cplx g2 = cfg.warm_start ? cfg.warm_start->g2 : -zinv;
    double damp = cfg.damping;

    bool have_good = false;
    cplx good_g2{}, good_raw{};
    double resid = std::numeric_limits<double>::infinity();
    long it = 0;

    for (it = 1; it <= cfg.max_iter; ++it) {
        const auto i1 = detail::weighted_resolvent(p.h1, g2);
        std::optional<cplx> i2;
        cplx g1{}, g2_raw{}, m{};
        bool bad = !i1.has_value();
        if (!bad) {
            g1 = -(c * zinv) * *i1;
            i2 = detail::weighted_resolvent(p.h2, g1);
            bad = !i2.has_value();
        }
        if (!bad) {
            g2_raw = -zinv * *i2;
            m = -zinv - g1 * g2_raw;
            bad = !detail::in_solution_set(z, m, g1, g2);
        }

        if (bad) {
            if (!have_good) {
                if (it > 50)
                    throw LeftSolutionSet("could not find an admissible iterate near "
                                          "the initial point");
                // walk the initial point back toward -1/z, which is admissible
                g2 = 0.5 * (g2 - zinv);
                continue;
            }
            damp *= 0.5;
            if (damp < 1e-8)
                throw LeftSolutionSet("iterates keep leaving the analytic solution "
                                      "set despite damping reductions");
            g2 = good_g2 + damp * (good_raw - good_g2);
            continue;
        }

        have_good = true;
        good_g2 = g2;
        good_raw = g2_raw;
        resid = std::abs(g1) * std::abs(g2_raw - g2) * resid_scale;

        if (resid <= cfg.tol && std::abs(g2_raw - g2) <= cfg.tol) {
            StieltjesTriple out;
            out.z = z;
            out.m = m;
            out.g1 = g1;
            out.g2 = g2;
            out.m_under = (m + (1.0 - c) * zinv) / c;
            out.iterations = it;
            // honest residuals: plug the returned values back in
            const double r1 =
                std::abs(out.m_under + zinv * detail::plain_resolvent(p.h1, g2));
            const double r2 =
                std::abs(m + zinv * detail::plain_resolvent(p.h2, g1));
            const double r3 = std::abs(m + zinv + g1 * g2);
            out.residual = std::max({r1, r2, r3});
            return out;
        }

        g2 = g2 + damp * (g2_raw - g2);
    }

    throw NoConvergence(resid, cfg.max_iter);
}

// Solve a sweep of points, warm-starting each from its predecessor. The
// first failure aborts the sweep and reports which point broke it.
inline std::vector<StieltjesTriple> solve_along(const ModelParams& p,
                                                std::span<const cplx> points,
                                                SolverConfig cfg = {}) {
    std::vector<StieltjesTriple> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        try {
            out.push_back(solve_at(p, points[i], cfg));
        } catch (const Error& e) {
            throw BatchError("solve_along", {{i, e.what()}});
        }
        cfg.warm_start = out.back();
    }
    return out;
}

// Outer bounds on the limiting support. s1/sn are the extreme atoms of
// h1, the t2 factors rescale them; for 0 < c < 1 a nonnegative model keeps
// a gap above zero, otherwise the lower bound collapses to 0 (or goes
// negative with the most negative h1 atom).
inline SupportBounds support_bounds(double c, const SpectralMeasure& t1,
                                    const SpectralMeasure& t2) {
    if (!std::isfinite(c) || c <= 0.0)
        throw DomainViolation("support_bounds: c must be positive and finite");
    if (!t2.nonnegative())
        throw DomainViolation("support_bounds: t2 must be supported on [0, inf)");
    const double s1 = t1.max_value();
    const double sn = t1.min_value();
    if (s1 <= 0.0)
        throw DomainViolation("support_bounds: top atom of t1 must be positive");
    const double sq = std::sqrt(c);
    const double plus = (1.0 + sq) * (1.0 + sq);
    const double minus = (1.0 - sq) * (1.0 - sq);
    SupportBounds b;
    b.upper = s1 * t2.max_value() * plus;
    if (sn >= 0.0)
        b.lower = (c < 1.0) ? sn * t2.min_value() * minus : 0.0;
    else
        b.lower = sn * t2.max_value() * plus;
    return b;
}

inline SupportBounds support_bounds(const ModelParams& p) {
    return support_bounds(p.c, p.h1, p.h2);
}

// Density of the absolutely continuous part at x, reconstructed from the
// Stieltjes transform just above the axis. Values below 1e-9 are clamped
// to 0 so far-field probe leakage does not read as mass.
inline double density(const ModelParams& p, double x, double v_probe = 1e-6,
                      const SolverConfig& cfg = {}) {
    if (!(v_probe > 0.0))
        throw ConfigError("density: v_probe must be positive");
    const StieltjesTriple t = solve_at(p, cplx(x, v_probe), cfg);
    const double d = t.m.imag() / std::numbers::pi;
    return d < 1e-9 ? 0.0 : d;
}

} // namespace sepcov
