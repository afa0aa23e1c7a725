#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "errors.hpp"
#include "solver.hpp"

namespace sepcov {

namespace detail {

// Gauss-Legendre rule on [-1, 1]: Newton on the Legendre recurrence from
// the Chebyshev initial guess, symmetry enforced exactly so mirrored nodes
// are bitwise negatives of each other.
struct GaussLegendre {
    std::vector<double> x;
    std::vector<double> w;

    explicit GaussLegendre(int n) : x(n), w(n) {
        for (int i = 0; i < n / 2; ++i) {
            double t = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int step = 0; step < 100; ++step) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (t * p1 - p0) / (t * t - 1.0);
                const double dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-15) break;
            }
            // one more recurrence pass at the converged node for the weight
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double weight = 2.0 / ((1.0 - t * t) * dp * dp);
            x[i] = -std::abs(t);
            w[i] = weight;
            x[n - 1 - i] = -x[i];
            w[n - 1 - i] = weight;
        }
        if (n % 2 == 1) {
            // center node at 0; not used by contours (they need even n)
            double p0 = 1.0, p1 = 0.0, t = 0.0;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (t * p1 - p0) / (t * t - 1.0);
            x[n / 2] = 0.0;
            w[n / 2] = 2.0 / (dp * dp);
        }
    }
};

// Per-edge node count adequate for a rectangle's geometry. Two things slow
// the rule down: a wide, squat rectangle runs its horizontal edges close to
// the support for a long stretch, and a branch point near a vertical edge
// (gap = horizontal distance to the nearest log singularity) pinches that
// edge the same way. Scale by the worse of the two; the caller's doubling
// check still guards whatever this heuristic misses.
inline int adequate_nodes(int base, double width, double v0, double cut_gap) {
    double n = static_cast<double>(base);
    const double aspect = width / (12.0 * v0);
    if (aspect > 1.0) n = std::max(n, base * aspect);
    if (std::isfinite(cut_gap) && cut_gap > 0.0)
        n = std::max(n, 14.0 / std::asinh(cut_gap / v0));
    const int k = 2 * static_cast<int>(std::ceil(0.5 * n));
    return std::max(base, std::min(k, 4096));
}

} // namespace detail

// Positively oriented axis-aligned rectangle [x_l, x_r] x [-v0, v0] with a
// Gauss-Legendre rule per edge. Node k carries a complex weight W_k such
// that a contour integral is just sum_k W_k f(z_k). Edges are ordered
// bottom, right, top, left starting at the bottom-left corner, and the
// node layout is mirror-symmetric about the real axis so conjugate pairs
// line up exactly.
class RectContour {
public:
    static constexpr double min_axis_gap = 1e-4;

    RectContour(double x_l, double x_r, double v0, int nodes_per_edge = 64)
        : x_l_(x_l), x_r_(x_r), v0_(v0), per_edge_(nodes_per_edge) {
        if (!(x_l < x_r) || !(v0 > 0.0))
            throw ConfigError("contour rectangle needs x_l < x_r and v0 > 0");
        if (per_edge_ < 2 || per_edge_ % 2 != 0)
            throw ConfigError("nodes_per_edge must be even and >= 2");

        const detail::GaussLegendre gl(per_edge_);
        const double mid = 0.5 * (x_l + x_r);
        const double half = 0.5 * (x_r - x_l);
        nodes_.reserve(4 * per_edge_);
        weights_.reserve(4 * per_edge_);
        for (int i = 0; i < per_edge_; ++i) { // bottom, left to right
            nodes_.emplace_back(mid + half * gl.x[i], -v0);
            weights_.emplace_back(gl.w[i] * half, 0.0);
        }
        for (int i = 0; i < per_edge_; ++i) { // right, upward
            nodes_.emplace_back(x_r, v0 * gl.x[i]);
            weights_.emplace_back(0.0, gl.w[i] * v0);
        }
        for (int i = 0; i < per_edge_; ++i) { // top, right to left
            nodes_.emplace_back(mid - half * gl.x[i], v0);
            weights_.emplace_back(-gl.w[i] * half, 0.0);
        }
        for (int i = 0; i < per_edge_; ++i) { // left, downward
            nodes_.emplace_back(x_l, -v0 * gl.x[i]);
            weights_.emplace_back(0.0, -gl.w[i] * v0);
        }

        double closest = v0;
        for (const cplx& z : nodes_) closest = std::min(closest, std::abs(z.imag()));
        if (closest < min_axis_gap)
            throw ContourTooTight("contour node within " + std::to_string(closest)
                                  + " of the real axis; raise v0 or lower "
                                    "nodes_per_edge");
    }

    const std::vector<cplx>& nodes() const { return nodes_; }
    const std::vector<cplx>& weights() const { return weights_; }
    double x_l() const { return x_l_; }
    double x_r() const { return x_r_; }
    double v0() const { return v0_; }
    int nodes_per_edge() const { return per_edge_; }

    bool encloses(double lo, double hi) const { return x_l_ < lo && hi < x_r_; }
    bool encloses(const SupportBounds& b) const { return encloses(b.lower, b.upper); }

    bool strictly_inside(const RectContour& outer) const {
        return x_l_ > outer.x_l_ && x_r_ < outer.x_r_ && v0_ < outer.v0_;
    }

    // index of the node conjugate to node k (same edge geometry mirrored)
    std::size_t mirror_index(std::size_t k) const {
        const std::size_t n = static_cast<std::size_t>(per_edge_);
        const std::size_t edge = k / n, i = k % n;
        switch (edge) {
            case 0: return 2 * n + (n - 1 - i); // bottom <-> top
            case 1: return n + (n - 1 - i);     // right edge flips in place
            case 2: return n - 1 - i;           // top <-> bottom
            default: return 3 * n + (n - 1 - i);
        }
    }

private:
    double x_l_, x_r_, v0_;
    int per_edge_;
    std::vector<cplx> nodes_;
    std::vector<cplx> weights_;
};

// sum_k W_k v_k for values sampled at contour.nodes()
inline cplx contour_sum(const RectContour& contour, std::span<const cplx> values) {
    if (values.size() != contour.nodes().size())
        throw ConfigError("contour_sum: value count does not match node count");
    cplx acc(0.0, 0.0);
    for (std::size_t k = 0; k < values.size(); ++k)
        acc += contour.weights()[k] * values[k];
    return acc;
}

// Rectangle around the support with a relative horizontal margin.
inline RectContour make_enclosing_contour(const SupportBounds& b,
                                          double margin_frac = 0.25,
                                          double v0 = 1.0,
                                          int nodes_per_edge = 64) {
    const double width = std::max(b.width(), 1e-6);
    return RectContour(b.lower - margin_frac * width, b.upper + margin_frac * width,
                       v0, nodes_per_edge);
}

// Solve the transforms at every contour node. Only the upper half is
// iterated (walked as one warm-started sweep up the right edge, across the
// top, down the left edge); lower nodes are filled by conjugation symmetry,
// which the mirror-symmetric node layout makes exact.
inline std::vector<StieltjesTriple> solve_contour(const ModelParams& p,
                                                  const RectContour& contour,
                                                  const SolverConfig& cfg = {}) {
    const auto& nodes = contour.nodes();
    std::vector<std::size_t> upper;
    upper.reserve(nodes.size() / 2);
    const std::size_t n = static_cast<std::size_t>(contour.nodes_per_edge());
    for (std::size_t i = n + n / 2; i < 2 * n; ++i) upper.push_back(i); // right, up
    for (std::size_t i = 2 * n; i < 3 * n; ++i) upper.push_back(i);     // top
    for (std::size_t i = 3 * n; i < 3 * n + n / 2; ++i) upper.push_back(i); // left, down

    std::vector<cplx> pts;
    pts.reserve(upper.size());
    for (std::size_t k : upper) pts.push_back(nodes[k]);

    const std::vector<StieltjesTriple> solved = solve_along(p, pts, cfg);

    std::vector<StieltjesTriple> out(nodes.size());
    for (std::size_t j = 0; j < upper.size(); ++j) {
        out[upper[j]] = solved[j];
        out[contour.mirror_index(upper[j])] = detail::conj_triple(solved[j]);
    }
    return out;
}

} // namespace sepcov
