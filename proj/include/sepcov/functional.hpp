#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "contour.hpp"
#include "solver.hpp"
#include "test_function.hpp"

namespace sepcov {

// Enclosing contour that also keeps clear of a test function's branch cut
// when the cut lies outside the support (log-type functions). If the cut
// touches the support no contour works; the default is returned and the
// caller's analyticity check will reject it.
inline RectContour auto_contour(const ModelParams& p,
                                const TestFunction* f = nullptr,
                                double margin_frac = 0.25, double v0 = 1.0,
                                int nodes_per_edge = 64) {
    const SupportBounds b = support_bounds(p);
    const double width = std::max(b.width(), 1e-6);
    double x_l = b.lower - margin_frac * width;
    double x_r = b.upper + margin_frac * width;
    double cut_gap = std::numeric_limits<double>::infinity();
    if (f && f->is_log() && f->scale() != 0.0) {
        const double root = -f->shift() / f->scale();
        if (f->scale() > 0.0 && root < b.lower) {
            if (!f->analytic_on(x_l, x_r))
                x_l = std::max(x_l, 0.5 * (root + b.lower));
            cut_gap = x_l - root;
        } else if (f->scale() < 0.0 && root > b.upper) {
            if (!f->analytic_on(x_l, x_r))
                x_r = std::min(x_r, 0.5 * (b.upper + root));
            cut_gap = root - x_r;
        }
    }
    nodes_per_edge =
        detail::adequate_nodes(nodes_per_edge, x_r - x_l, v0, cut_gap);
    return RectContour(x_l, x_r, v0, nodes_per_edge);
}

// Integral of f against the limit law, evaluated as the contour integral
// -(1/2 pi i) of f(z) m(z) dz around the support. The result of a valid
// computation is real; a nontrivial imaginary residue means the quadrature
// or the solves are inconsistent and is treated as an error, not noise.
inline double functional(const ModelParams& p, const TestFunction& f,
                         const RectContour& contour,
                         const SolverConfig& cfg = {}) {
    const SupportBounds b = support_bounds(p);
    if (!contour.encloses(b))
        throw ContourTooTight("contour does not strictly enclose the support ["
                              + std::to_string(b.lower) + ", "
                              + std::to_string(b.upper) + "]");
    if (!f.analytic_on(contour.x_l(), contour.x_r()))
        throw BranchCutCrossing("test function '" + f.label()
                                + "' has a branch cut inside the contour");

    const std::vector<StieltjesTriple> triples = solve_contour(p, contour, cfg);
    std::vector<cplx> vals;
    vals.reserve(triples.size());
    for (std::size_t k = 0; k < triples.size(); ++k)
        vals.push_back(f(triples[k].z) * triples[k].m);

    const cplx raw = contour_sum(contour, vals);
    const cplx val = raw / cplx(0.0, -2.0 * std::numbers::pi);
    if (std::abs(val.imag()) > 1e-8)
        throw NonConvergedQuadrature("functional: imaginary residue "
                                     + std::to_string(val.imag()));
    return val.real();
}

} // namespace sepcov
