#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "contour.hpp"
#include "errors.hpp"
#include "functional.hpp"
#include "solver.hpp"
#include "test_function.hpp"

namespace sepcov {

namespace detail {

constexpr double denom_guard = 1e-12;
constexpr double coincide_guard = 1e-10;
constexpr double refine_budget = 1e-7;
constexpr double imag_budget = 1e-8;

// int u^j / (1 + g u)^k dmu
inline cplx frac_moment(const SpectralMeasure& mu, cplx g, int j, int k) {
    cplx acc(0.0, 0.0);
    for (const Atom& a : mu.atoms()) {
        const cplx den = std::pow(1.0 + g * a.value, k);
        acc += a.weight * std::pow(cplx(a.value), j) / den;
    }
    return acc;
}

// Shared moment integrals behind the mean-correction terms at one z.
struct MeanParts {
    cplx zinv;
    cplx i1_12, i1_22, i1_23, i1_33;
    cplx i2_12, i2_22, i2_23;
    cplx b; // 1 - c z^-2 i1_22 i2_22, the resolvent expansion denominator
};

inline MeanParts mean_parts(const ModelParams& p, const StieltjesTriple& t) {
    MeanParts mp;
    mp.zinv = 1.0 / t.z;
    mp.i1_12 = frac_moment(p.h1, t.g2, 1, 2);
    mp.i1_22 = frac_moment(p.h1, t.g2, 2, 2);
    mp.i1_23 = frac_moment(p.h1, t.g2, 2, 3);
    mp.i1_33 = frac_moment(p.h1, t.g2, 3, 3);
    mp.i2_12 = frac_moment(p.h2, t.g1, 1, 2);
    mp.i2_22 = frac_moment(p.h2, t.g1, 2, 2);
    mp.i2_23 = frac_moment(p.h2, t.g1, 2, 3);
    mp.b = 1.0 - p.c * mp.zinv * mp.zinv * mp.i1_22 * mp.i2_22;
    if (std::abs(mp.b) < denom_guard)
        throw DegenerateDenominator("mean correction: expansion denominator "
                                    "vanished at z = " + std::to_string(t.z.real())
                                    + (t.z.imag() < 0 ? "-" : "+")
                                    + std::to_string(std::abs(t.z.imag())) + "i");
    return mp;
}

inline cplx mean_term1_from(double c, const MeanParts& mp) {
    const cplx z3 = mp.zinv * mp.zinv * mp.zinv;
    const cplx z4 = z3 * mp.zinv;
    return -c * z3 * mp.i1_22 * mp.i2_23 / mp.b
           - c * z4 * mp.i1_33 * mp.i2_12 * mp.i2_22 / mp.b;
}

inline cplx mean_term2_from(double c, const MeanParts& mp) {
    if (std::abs(mp.i1_12) < denom_guard)
        throw DegenerateDenominator("mean correction: first moment integral "
                                    "vanished");
    const cplx z4 = mp.zinv * mp.zinv * mp.zinv * mp.zinv;
    return -c * z4 * mp.i1_23 * mp.i2_22 * mp.i1_22 * mp.i2_12 / (mp.i1_12 * mp.b);
}

// (term1 - term2) / outer has a removable singularity where the first
// moment integral i1_12 crosses zero (possible for sign-indefinite h1 with
// the contour's left edge near the crossing); the cancelled form below is
// algebraically identical and stays finite there.
inline cplx mean_integrand_from(double c, const MeanParts& mp) {
    const cplx z3 = mp.zinv * mp.zinv * mp.zinv;
    const cplx z4 = z3 * mp.zinv;
    const cplx d1_b = -c * z3 * mp.i1_22 * mp.i2_23
                      - c * z4 * mp.i1_33 * mp.i2_12 * mp.i2_22; // term1 * b
    const cplx d2_b12 = -c * z4 * mp.i1_23 * mp.i2_22 * mp.i1_22 *
                        mp.i2_12; // term2 * b * i1_12
    const cplx den = mp.i1_12 - mp.zinv * mp.i1_22 * mp.i2_12; // i1_12 * outer
    if (std::abs(den) < denom_guard)
        throw DegenerateDenominator("mean correction: outer factor vanished");
    return (d1_b * mp.i1_12 - d2_b12) / (mp.b * den);
}

} // namespace detail

// First correction term of the limiting mean integrand.
inline cplx mean_term1(const ModelParams& p, const StieltjesTriple& t) {
    return detail::mean_term1_from(p.c, detail::mean_parts(p, t));
}

// Second correction term (the one carrying the inverted first-moment factor).
inline cplx mean_term2(const ModelParams& p, const StieltjesTriple& t) {
    return detail::mean_term2_from(p.c, detail::mean_parts(p, t));
}

// Full integrand of the limiting mean: (term1 - term2) over the outer factor.
inline cplx mean_integrand(const ModelParams& p, const StieltjesTriple& t) {
    return detail::mean_integrand_from(p.c, detail::mean_parts(p, t));
}

// Two-point kernel driving the limiting covariance. Needs both transform
// pairs to be separated; on admissible nested contours its modulus stays
// below 1, which keeps the principal log of (1 - kernel) single-valued.
inline cplx two_point_kernel(const StieltjesTriple& a, const StieltjesTriple& b) {
    const cplx dg1 = a.g1 - b.g1;
    const cplx dg2 = a.g2 - b.g2;
    if (std::abs(dg1) <= detail::coincide_guard ||
        std::abs(dg2) <= detail::coincide_guard)
        throw CoincidentPoints("two_point_kernel: transform values coincide");
    const cplx num1 = a.z * a.g1 - b.z * b.g1;
    const cplx num2 = a.z * a.g2 - b.z * b.g2;
    const cplx k = (num1 / dg2) * (num2 / dg1) / (a.z * b.z);
    if (!std::isfinite(k.real()) || !std::isfinite(k.imag()))
        throw NonFiniteKernel("two_point_kernel: non-finite value");
    return k;
}

namespace detail {

inline double mean_from(const ModelParams& p, const TestFunction& f,
                        const RectContour& contour,
                        const std::vector<StieltjesTriple>& triples) {
    std::vector<cplx> vals;
    vals.reserve(triples.size());
    for (const StieltjesTriple& t : triples)
        vals.push_back(f(t.z) * mean_integrand_from(p.c, mean_parts(p, t)));
    const cplx val = contour_sum(contour, vals) / cplx(0.0, -2.0 * std::numbers::pi);
    if (std::abs(val.imag()) > imag_budget)
        throw NonConvergedQuadrature("clt_mean: imaginary residue "
                                     + std::to_string(val.imag()));
    return val.real();
}

// log(1 - kernel) over all inner x outer node pairs; every pair must stay
// strictly inside the unit disk or the covariance representation breaks.
inline std::vector<cplx> kernel_log_matrix(const std::vector<StieltjesTriple>& ti,
                                           const std::vector<StieltjesTriple>& to) {
    std::vector<cplx> logs(ti.size() * to.size());
    for (std::size_t i = 0; i < ti.size(); ++i) {
        for (std::size_t j = 0; j < to.size(); ++j) {
            const cplx k = two_point_kernel(ti[i], to[j]);
            if (std::abs(k) >= 1.0)
                throw BranchViolation("two-point kernel modulus "
                                      + std::to_string(std::abs(k))
                                      + " >= 1 between contour nodes; contours "
                                        "too close together");
            logs[i * to.size() + j] = std::log(1.0 - k);
        }
    }
    return logs;
}

inline double cov_from(const TestFunction& f, const TestFunction& g,
                       const RectContour& ci,
                       const std::vector<StieltjesTriple>& ti,
                       const RectContour& co,
                       const std::vector<StieltjesTriple>& to,
                       const std::vector<cplx>& logs) {
    std::vector<cplx> fi(ti.size()), gi(ti.size()), fo(to.size()), go(to.size());
    for (std::size_t i = 0; i < ti.size(); ++i) {
        fi[i] = f.derivative(ti[i].z) * ci.weights()[i];
        gi[i] = g.derivative(ti[i].z) * ci.weights()[i];
    }
    for (std::size_t j = 0; j < to.size(); ++j) {
        fo[j] = f.derivative(to[j].z) * co.weights()[j];
        go[j] = g.derivative(to[j].z) * co.weights()[j];
    }
    cplx acc(0.0, 0.0), swapped(0.0, 0.0);
    for (std::size_t i = 0; i < ti.size(); ++i) {
        cplx row(0.0, 0.0), row_sw(0.0, 0.0);
        for (std::size_t j = 0; j < to.size(); ++j) {
            const cplx l = logs[i * to.size() + j];
            row += go[j] * l;
            row_sw += fo[j] * l;
        }
        acc += fi[i] * row;
        swapped += gi[i] * row_sw;
    }
    const double scale = 1.0 / (2.0 * std::numbers::pi * std::numbers::pi);
    const cplx val = scale * acc;
    const cplx val_sw = scale * swapped;
    if (std::abs(val.imag()) > imag_budget)
        throw NonConvergedQuadrature("clt_cov: imaginary residue "
                                     + std::to_string(val.imag()));
    if (std::abs(val.real() - val_sw.real()) > 1e-9)
        throw NonConvergedQuadrature("clt_cov: argument-swap asymmetry "
                                     + std::to_string(val.real() - val_sw.real()));
    return val.real();
}

inline RectContour doubled(const RectContour& c) {
    return RectContour(c.x_l(), c.x_r(), c.v0(), 2 * c.nodes_per_edge());
}

inline void check_mean_inputs(const ModelParams& p, const TestFunction& f,
                              const RectContour& contour) {
    const SupportBounds b = support_bounds(p);
    if (!contour.encloses(b))
        throw ContourTooTight("contour does not strictly enclose the support");
    if (!f.analytic_on(contour.x_l(), contour.x_r()))
        throw BranchCutCrossing("test function '" + f.label()
                                + "' has a branch cut inside the contour");
}

} // namespace detail

// Limiting mean of the centered linear spectral statistic for f. The
// quadrature is self-checked: the same integral at double resolution must
// agree to 1e-7, and the refined value is returned.
inline double clt_mean(const ModelParams& p, const TestFunction& f,
                       const RectContour& contour, const SolverConfig& cfg = {}) {
    detail::check_mean_inputs(p, f, contour);
    const RectContour fine = detail::doubled(contour);
    const double coarse_val =
        detail::mean_from(p, f, contour, solve_contour(p, contour, cfg));
    const double fine_val =
        detail::mean_from(p, f, fine, solve_contour(p, fine, cfg));
    if (std::abs(fine_val - coarse_val) > detail::refine_budget)
        throw NonConvergedQuadrature("clt_mean: refinement moved the value by "
                                     + std::to_string(fine_val - coarse_val));
    return fine_val;
}

// Limiting covariance of the centered statistics for f and g, computed on
// two nested contours (f rides the inner one). Same refinement self-check
// as clt_mean.
inline double clt_cov(const ModelParams& p, const TestFunction& f,
                      const TestFunction& g, const RectContour& inner,
                      const RectContour& outer, const SolverConfig& cfg = {}) {
    const SupportBounds b = support_bounds(p);
    if (!inner.encloses(b) || !outer.encloses(b))
        throw ContourTooTight("both contours must strictly enclose the support");
    if (!inner.strictly_inside(outer))
        throw OverlappingContours("inner contour must be strictly inside the "
                                  "outer one");
    if (!f.analytic_on(inner.x_l(), inner.x_r()))
        throw BranchCutCrossing("test function '" + f.label()
                                + "' has a branch cut inside the inner contour");
    if (!g.analytic_on(outer.x_l(), outer.x_r()))
        throw BranchCutCrossing("test function '" + g.label()
                                + "' has a branch cut inside the outer contour");

    const auto eval = [&](const RectContour& ci, const RectContour& co) {
        const auto ti = solve_contour(p, ci, cfg);
        const auto to = solve_contour(p, co, cfg);
        return detail::cov_from(f, g, ci, ti, co, to,
                                detail::kernel_log_matrix(ti, to));
    };
    const double coarse_val = eval(inner, outer);
    const double fine_val = eval(detail::doubled(inner), detail::doubled(outer));
    if (std::abs(fine_val - coarse_val) > detail::refine_budget)
        throw NonConvergedQuadrature("clt_cov: refinement moved the value by "
                                     + std::to_string(fine_val - coarse_val));
    return fine_val;
}

struct ContourMeta {
    int nodes_per_edge = 0;
    double mean_delta = 0.0; // largest refinement shift seen across means
    double cov_delta = 0.0;  // same across covariance entries
};

struct CltSummary {
    std::vector<TestFunction> functions;
    std::vector<double> mean;
    std::vector<std::vector<double>> cov;
    ContourMeta contour_meta;
};

namespace detail {

// Contour construction for a family of functions: horizontal margins by
// fraction of the support width, pulled in where a log branch cut would
// otherwise end up inside. cut_frac places the clamped edge between the cut
// and the support (smaller = closer to the cut), letting nested contours
// stay nested after clamping.
inline RectContour family_contour(const ModelParams& p,
                                  const std::vector<TestFunction>& fs,
                                  double margin_frac, double v0,
                                  int nodes_per_edge, double cut_frac) {
    const SupportBounds b = support_bounds(p);
    const double width = std::max(b.width(), 1e-6);
    double x_l = b.lower - margin_frac * width;
    double x_r = b.upper + margin_frac * width;
    for (const TestFunction& f : fs) {
        if (!f.is_log() || f.scale() == 0.0) continue;
        const double root = -f.shift() / f.scale();
        if (f.scale() > 0.0 && root < b.lower)
            x_l = std::max(x_l, root + cut_frac * (b.lower - root));
        else if (f.scale() < 0.0 && root > b.upper)
            x_r = std::min(x_r, root + cut_frac * (b.upper - root));
    }
    // second pass once the edges settle: distance from each vertical edge to
    // the nearest branch point drives that edge's node requirement
    double cut_gap = std::numeric_limits<double>::infinity();
    for (const TestFunction& f : fs) {
        if (!f.is_log() || f.scale() == 0.0) continue;
        const double root = -f.shift() / f.scale();
        if (f.scale() > 0.0 && root < b.lower)
            cut_gap = std::min(cut_gap, x_l - root);
        else if (f.scale() < 0.0 && root > b.upper)
            cut_gap = std::min(cut_gap, root - x_r);
    }
    nodes_per_edge =
        detail::adequate_nodes(nodes_per_edge, x_r - x_l, v0, cut_gap);
    return RectContour(x_l, x_r, v0, nodes_per_edge);
}

} // namespace detail

// Means and full covariance matrix for a family of test functions, on
// automatically chosen nested contours. Contours are solved once per
// resolution and shared across all functions and pairs.
inline CltSummary clt_summary(const ModelParams& p,
                              const std::vector<TestFunction>& functions,
                              const SolverConfig& cfg = {},
                              int nodes_per_edge = 64) {
    if (functions.empty()) {
        CltSummary empty;
        empty.contour_meta.nodes_per_edge = nodes_per_edge;
        return empty;
    }

    const RectContour inner =
        detail::family_contour(p, functions, 0.25, 1.0, nodes_per_edge, 0.5);
    const RectContour outer =
        detail::family_contour(p, functions, 0.40, 1.5, nodes_per_edge, 0.25);
    for (const TestFunction& f : functions) {
        detail::check_mean_inputs(p, f, inner);
        if (!f.analytic_on(outer.x_l(), outer.x_r()))
            throw BranchCutCrossing("test function '" + f.label()
                                    + "' has a branch cut inside the outer "
                                      "contour");
    }
    if (!inner.strictly_inside(outer))
        throw OverlappingContours("auto contours failed to nest; widen margins");

    const RectContour inner2 = detail::doubled(inner);
    const RectContour outer2 = detail::doubled(outer);
    const auto ti = solve_contour(p, inner, cfg);
    const auto ti2 = solve_contour(p, inner2, cfg);
    const auto to = solve_contour(p, outer, cfg);
    const auto to2 = solve_contour(p, outer2, cfg);
    const auto logs = detail::kernel_log_matrix(ti, to);
    const auto logs2 = detail::kernel_log_matrix(ti2, to2);

    const std::size_t k = functions.size();
    CltSummary s;
    s.functions = functions;
    s.mean.resize(k);
    s.cov.assign(k, std::vector<double>(k, 0.0));
    s.contour_meta.nodes_per_edge = inner.nodes_per_edge();

    // Entry failures are collected rather than aborting the sweep, so one bad
    // pair still reports every other bad pair alongside it.
    std::vector<BatchError::Item> failed;

    for (std::size_t i = 0; i < k; ++i) {
        try {
            const double coarse_val =
                detail::mean_from(p, functions[i], inner, ti);
            const double fine_val =
                detail::mean_from(p, functions[i], inner2, ti2);
            const double delta = std::abs(fine_val - coarse_val);
            if (delta > detail::refine_budget)
                throw NonConvergedQuadrature("mean refinement moved by "
                                             + std::to_string(delta));
            s.mean[i] = fine_val;
            s.contour_meta.mean_delta =
                std::max(s.contour_meta.mean_delta, delta);
        } catch (const Error& e) {
            failed.push_back({i, "mean '" + functions[i].label() + "': "
                                     + e.what()});
        }
    }

    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            try {
                const double coarse_val = detail::cov_from(
                    functions[i], functions[j], inner, ti, outer, to, logs);
                const double fine_val = detail::cov_from(
                    functions[i], functions[j], inner2, ti2, outer2, to2,
                    logs2);
                const double delta = std::abs(fine_val - coarse_val);
                if (delta > detail::refine_budget)
                    throw NonConvergedQuadrature(
                        "covariance refinement moved by "
                        + std::to_string(delta));
                s.cov[i][j] = fine_val;
                s.cov[j][i] = fine_val;
                s.contour_meta.cov_delta =
                    std::max(s.contour_meta.cov_delta, delta);
            } catch (const Error& e) {
                failed.push_back({i * k + j, "cov ('" + functions[i].label()
                                                 + "', " + "'"
                                                 + functions[j].label()
                                                 + "'): " + e.what()});
            }
        }
    }

    if (!failed.empty())
        throw BatchError("clt_summary [" + failed.front().message + "]",
                         std::move(failed));

    Eigen::MatrixXd cm(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            cm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                s.cov[i][j];
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cm,
                                                            Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw EigenFailure("clt_summary: eigensolve on the covariance matrix "
                           "failed");
    if (es.eigenvalues().minCoeff() < -1e-8)
        throw NonConvergedQuadrature(
            "clt_summary: covariance matrix has eigenvalue "
            + std::to_string(es.eigenvalues().minCoeff())
            + ", not PSD within tolerance");

    return s;
}

} // namespace sepcov
