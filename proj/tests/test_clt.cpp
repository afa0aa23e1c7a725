#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include <sepcov/clt.hpp>

#include "oracles.hpp"

using namespace sepcov;

namespace {

ModelParams mp_model(double c) {
    return ModelParams(c, point_mass(1.0), point_mass(1.0));
}

// T2 = I with a nontrivial T1 spectrum
ModelParams left_model() {
    return ModelParams(0.5, SpectralMeasure({{1.0, 0.5}, {2.0, 0.5}}),
                       point_mass(1.0));
}

// T1 = I with a nontrivial T2 spectrum
ModelParams right_model() {
    return ModelParams(0.5, point_mass(1.0),
                       SpectralMeasure({{1.0, 0.5}, {3.0, 0.5}}));
}

ModelParams separable_model() {
    return ModelParams(0.5, SpectralMeasure({{1.0, 0.5}, {2.0, 0.5}}),
                       SpectralMeasure({{1.0, 0.5}, {3.0, 0.5}}));
}

// explicit contours need node counts sized to the bracket: a wide bracket at
// the same height puts the horizontal edges close to the support for longer
int nodes_for(const SupportBounds& b) { return b.width() > 10.0 ? 192 : 64; }

const std::vector<cplx> probe_points{cplx(2.0, 1.5), cplx(0.5, 0.3),
                                     cplx(-1.0, 2.0), cplx(4.0, -0.7)};

// Reduced one-sided mean integrand: a single moment integral in the scalar
// transform w with weights (1 + s*x*w), matching the identity-factor
// collapse of the general formula.
cplx reduced_mean_integrand(const SpectralMeasure& h, double c, cplx w,
                            double s) {
    cplx num(0.0, 0.0), den(0.0, 0.0);
    for (const Atom& a : h.atoms()) {
        const cplx base = 1.0 + s * a.value * w;
        num += a.weight * c * w * w * w * a.value * a.value / (base * base * base);
        den += a.weight * c * w * w * a.value * a.value / (base * base);
    }
    return num / ((1.0 - den) * (1.0 - den));
}

cplx reduced_kernel(cplx w1, cplx w2, cplx z1, cplx z2) {
    return 1.0 + w1 * w2 * (z1 - z2) / (w2 - w1);
}

} // namespace

TEST_CASE("one-sided models collapse the auxiliary transforms") {
    for (const cplx z : probe_points) {
        // T2 = I: g2 rides m, g1 is determined by m alone
        const ModelParams pl = left_model();
        const StieltjesTriple tl = solve_at(pl, z);
        CHECK(std::abs(tl.g2 - tl.m) <= 1e-10);
        CHECK(std::abs(tl.g1 - (-1.0 / (z * tl.m) - 1.0)) <= 1e-10);
        const cplx under_eq =
            integrate(pl.h1, [&](double x) { return 1.0 / (1.0 + tl.m * x); });
        CHECK(std::abs(tl.m_under + under_eq / z) <= 1e-10);

        // T1 = I: g1 rides the companion transform
        const ModelParams pr = right_model();
        const StieltjesTriple tr = solve_at(pr, z);
        CHECK(std::abs(tr.g1 - 0.5 * tr.m_under) <= 1e-10);
        CHECK(std::abs(tr.g2 - (-1.0 / (z * tr.m_under) - 1.0)) <= 1e-10);
        const cplx m_eq = integrate(pr.h2, [&](double y) {
            return 1.0 / (1.0 + 0.5 * tr.m_under * y);
        });
        CHECK(std::abs(tr.m + m_eq / z) <= 1e-10);
    }
}

TEST_CASE("mean integrand matches the one-sided reductions pointwise") {
    for (const cplx z : probe_points) {
        const ModelParams pl = left_model();
        const StieltjesTriple tl = solve_at(pl, z);
        const cplx general_l = mean_integrand(pl, tl);
        const cplx reduced_l = reduced_mean_integrand(pl.h1, pl.c, tl.m, 1.0);
        CHECK(std::abs(general_l - reduced_l) <= 1e-9);

        const ModelParams pr = right_model();
        const StieltjesTriple tr = solve_at(pr, z);
        const cplx general_r = mean_integrand(pr, tr);
        const cplx reduced_r =
            reduced_mean_integrand(pr.h2, pr.c, tr.m_under, pr.c);
        CHECK(std::abs(general_r - reduced_r) <= 1e-9);
    }
}

TEST_CASE("two-point kernel matches the one-sided reductions") {
    const cplx z1(2.0, 1.5), z2(1.0, -2.0);

    const ModelParams pl = left_model();
    const StieltjesTriple a_l = solve_at(pl, z1), b_l = solve_at(pl, z2);
    CHECK(std::abs(two_point_kernel(a_l, b_l) -
                   reduced_kernel(a_l.m, b_l.m, z1, z2)) <= 1e-9);

    const ModelParams pr = right_model();
    const StieltjesTriple a_r = solve_at(pr, z1), b_r = solve_at(pr, z2);
    CHECK(std::abs(two_point_kernel(a_r, b_r) -
                   reduced_kernel(a_r.m_under, b_r.m_under, z1, z2)) <= 1e-9);
}

TEST_CASE("kernel exchange symmetry is exact") {
    const ModelParams p = separable_model();
    const StieltjesTriple a = solve_at(p, cplx(2.0, 1.0));
    const StieltjesTriple b = solve_at(p, cplx(5.0, -0.5));
    const cplx k1 = two_point_kernel(a, b);
    const cplx k2 = two_point_kernel(b, a);
    CHECK(k1.real() == k2.real());
    CHECK(k1.imag() == k2.imag());
}

TEST_CASE("kernel guards") {
    const ModelParams p = mp_model(1.0);
    const StieltjesTriple t = solve_at(p, cplx(2.0, 1.0));
    CHECK_THROWS_AS(two_point_kernel(t, t), CoincidentPoints);

    StieltjesTriple z0;
    z0.z = cplx(0.0, 0.0);
    z0.g1 = cplx(1.0, 1.0);
    z0.g2 = cplx(2.0, 1.0);
    StieltjesTriple other;
    other.z = cplx(1.0, 1.0);
    other.g1 = cplx(2.0, 0.0);
    other.g2 = cplx(0.0, 3.0);
    CHECK_THROWS_AS(two_point_kernel(z0, other), NonFiniteKernel);
}

TEST_CASE("kernel modulus at or past one is a branch violation") {
    // crafted transform values drive the kernel to 2.3 - 1.4i
    StieltjesTriple a;
    a.z = cplx(1.0, 1.0);
    a.g1 = cplx(1.0, 0.0);
    a.g2 = cplx(1.0, 0.0);
    StieltjesTriple b;
    b.z = cplx(2.0, 1.0);
    b.g1 = cplx(2.0, 0.0);
    b.g2 = cplx(3.0, 0.0);
    const cplx k = two_point_kernel(a, b);
    CHECK(std::abs(k) > 1.0);
    CHECK_THROWS_AS(detail::kernel_log_matrix({a}, {b}), BranchViolation);
}

TEST_CASE("mean term denominators") {
    // symmetric sign-indefinite h1 with g2 = 0 kills the first moment
    // integral: the split terms degenerate but the cancelled integrand
    // stays finite
    const ModelParams p(0.5, SpectralMeasure({{-1.0, 0.5}, {1.0, 0.5}}),
                        point_mass(1.0));
    StieltjesTriple t;
    t.z = cplx(2.0, 1.0);
    t.g1 = cplx(1.0, 0.0);
    t.g2 = cplx(0.0, 0.0);
    CHECK_THROWS_AS(mean_term2(p, t), DegenerateDenominator);
    CHECK_NOTHROW(mean_integrand(p, t));

    // at a generic solved point the three expressions are consistent:
    // integrand = (term1 - term2) / (1 - z^-1 i1_22 i2_12 / i1_12)
    const ModelParams ps = separable_model();
    const StieltjesTriple ts = solve_at(ps, cplx(3.0, 1.0));
    const cplx i1_12 = detail::frac_moment(ps.h1, ts.g2, 1, 2);
    const cplx i1_22 = detail::frac_moment(ps.h1, ts.g2, 2, 2);
    const cplx i2_12 = detail::frac_moment(ps.h2, ts.g1, 1, 2);
    const cplx outer = 1.0 - i1_22 * i2_12 / (ts.z * i1_12);
    const cplx split = (mean_term1(ps, ts) - mean_term2(ps, ts)) / outer;
    CHECK(std::abs(mean_integrand(ps, ts) - split) <= 1e-12);
}

TEST_CASE("mean terms are conjugate-symmetric") {
    const ModelParams p = separable_model();
    const StieltjesTriple t = solve_at(p, cplx(2.5, 1.2));
    const StieltjesTriple tc = solve_at(p, cplx(2.5, -1.2));
    const auto close = [](cplx a, cplx b) {
        return std::abs(a - b) <= 1e-13 * std::max(1.0, std::abs(a));
    };
    CHECK(close(mean_term1(p, tc), std::conj(mean_term1(p, t))));
    CHECK(close(mean_term2(p, tc), std::conj(mean_term2(p, t))));
    CHECK(close(mean_integrand(p, tc), std::conj(mean_integrand(p, t))));
}

TEST_CASE("mean corrections vanish as c goes to zero") {
    const ModelParams p = mp_model(1e-6);
    const StieltjesTriple t = solve_at(p, cplx(1.0, 1.0));
    CHECK(std::abs(mean_term1(p, t)) <= 1e-5);
    CHECK(std::abs(mean_term2(p, t)) <= 1e-5);
    CHECK(std::abs(mean_integrand(p, t)) <= 1e-5);
}

TEST_CASE("limiting mean: exact zero for the trace statistic") {
    for (const ModelParams& p :
         {mp_model(0.25), mp_model(1.0), mp_model(2.0), separable_model()}) {
        const SupportBounds b = support_bounds(p);
        const RectContour c =
            make_enclosing_contour(b, 0.25, 1.0, nodes_for(b));
        INFO("c=" << p.c);
        CHECK(std::abs(clt_mean(p, TestFunction::monomial(1), c)) <= 1e-7);
        CHECK(std::abs(clt_mean(p, TestFunction::monomial(0), c)) <= 1e-7);
    }
}

TEST_CASE("limiting mean of the squared statistic is the ratio") {
    // E G(x^2) -> c: from the exact finite-n expectation of tr B^2 under
    // fourth moment 3; survives the limit unchanged
    for (double c : {0.25, 1.0, 2.0}) {
        const ModelParams p = mp_model(c);
        const RectContour contour =
            make_enclosing_contour(support_bounds(p), 0.25, 1.0, 64);
        CHECK(std::abs(clt_mean(p, TestFunction::monomial(2), contour) - c) <=
              1e-6);
    }
}

namespace {

// Covariance via trapezoid quadrature on two circles around the support,
// with the oracle transform and the reduced kernel: no library contours,
// solver, or kernel code involved.
double circle_cov_oracle(double c, const TestFunction& f,
                         const TestFunction& g, int M = 400) {
    const auto [a, b] = oracle::mp_edges(c);
    const double mid = 0.5 * (a + b);
    const double r1 = (b - a) * 0.5 + 1.0;
    const double r2 = r1 + 0.6;
    cplx acc(0.0, 0.0);
    for (int j = 0; j < M; ++j) {
        const double th1 = 2.0 * std::numbers::pi * (j + 0.5) / M;
        const cplx z1 = mid + r1 * std::exp(cplx(0.0, th1));
        const cplx w1 = cplx(0.0, 1.0) * r1 * std::exp(cplx(0.0, th1)) *
                        (2.0 * std::numbers::pi / M);
        const cplx m1 = oracle::mp_m(c, z1);
        for (int l = 0; l < M; ++l) {
            const double th2 = 2.0 * std::numbers::pi * (l + 0.5) / M;
            const cplx z2 = mid + r2 * std::exp(cplx(0.0, th2));
            const cplx w2 = cplx(0.0, 1.0) * r2 * std::exp(cplx(0.0, th2)) *
                            (2.0 * std::numbers::pi / M);
            const cplx m2 = oracle::mp_m(c, z2);
            const cplx k = reduced_kernel(m1, m2, z1, z2);
            acc += f.derivative(z1) * w1 * g.derivative(z2) * w2 *
                   std::log(1.0 - k);
        }
    }
    return (acc / (2.0 * std::numbers::pi * std::numbers::pi)).real();
}

} // namespace

TEST_CASE("limiting covariance against hand values and circle quadrature") {
    const TestFunction fx = TestFunction::monomial(1);
    const TestFunction fx2 = TestFunction::monomial(2);

    // variance of the trace statistic: 2 c m2(h1) m2(h2)
    struct Case {
        ModelParams p;
        double var_x;
    };
    const std::vector<Case> cases{
        {mp_model(0.25), 0.5},
        {mp_model(1.0), 2.0},
        {mp_model(2.0), 4.0},
        {separable_model(), 12.5},
        {ModelParams(0.25, SpectralMeasure({{-1.0, 0.5}, {2.0, 0.5}}),
                     point_mass(1.0)),
         1.25},
    };
    for (const auto& [p, expected] : cases) {
        const SupportBounds b = support_bounds(p);
        const RectContour inner =
            make_enclosing_contour(b, 0.25, 1.0, nodes_for(b));
        const RectContour outer =
            make_enclosing_contour(b, 0.40, 1.5, nodes_for(b));
        INFO("c=" << p.c);
        CHECK(std::abs(clt_cov(p, fx, fx, inner, outer) - expected) <= 1e-5);
    }

    // cross and quadratic entries against the circle-quadrature oracle
    const ModelParams p1 = mp_model(1.0);
    const SupportBounds b1 = support_bounds(p1);
    const RectContour inner = make_enclosing_contour(b1, 0.25, 1.0, 64);
    const RectContour outer = make_enclosing_contour(b1, 0.40, 1.5, 64);

    const double oracle_xx = circle_cov_oracle(1.0, fx, fx);
    CHECK(std::abs(oracle_xx - 2.0) <= 1e-6); // oracle self-check

    const double cov_xx2 = clt_cov(p1, fx, fx2, inner, outer);
    CHECK(std::abs(cov_xx2 - circle_cov_oracle(1.0, fx, fx2)) <= 1e-5);
    CHECK(std::abs(clt_cov(p1, fx2, fx2, inner, outer) -
                   circle_cov_oracle(1.0, fx2, fx2)) <= 1e-5);

    // argument order does not matter
    CHECK(std::abs(cov_xx2 - clt_cov(p1, fx2, fx, inner, outer)) <= 1e-9);

    // constants do not fluctuate
    CHECK(clt_cov(p1, TestFunction::monomial(0), fx, inner, outer) == 0.0);
}

TEST_CASE("covariance contour guards") {
    const ModelParams p = mp_model(1.0);
    const TestFunction fx = TestFunction::monomial(1);
    const SupportBounds b = support_bounds(p);
    const RectContour inner = make_enclosing_contour(b, 0.25, 1.0, 32);
    const RectContour outer = make_enclosing_contour(b, 0.40, 1.5, 32);

    CHECK_THROWS_AS(clt_cov(p, fx, fx, outer, inner), OverlappingContours);
    CHECK_THROWS_AS(clt_cov(p, fx, fx, RectContour(1.0, 3.0, 1.0, 32), outer),
                    ContourTooTight);
    CHECK_THROWS_AS(clt_mean(p, fx, RectContour(1.0, 3.0, 1.0, 32)),
                    ContourTooTight);
}

TEST_CASE("results are stable under widened contours") {
    const ModelParams p = separable_model();
    const TestFunction fx2 = TestFunction::monomial(2);
    const TestFunction fx = TestFunction::monomial(1);
    const SupportBounds b = support_bounds(p);

    const int nn = nodes_for(b);
    const double m1 =
        clt_mean(p, fx2, make_enclosing_contour(b, 0.25, 1.0, nn));
    const double m2 =
        clt_mean(p, fx2, make_enclosing_contour(b, 0.375, 1.5, nn));
    CHECK(std::abs(m1 - m2) <= 1e-7);

    const double v1 =
        clt_cov(p, fx2, fx, make_enclosing_contour(b, 0.25, 1.0, nn),
                make_enclosing_contour(b, 0.40, 1.5, nn));
    const double v2 =
        clt_cov(p, fx2, fx, make_enclosing_contour(b, 0.375, 1.2, nn),
                make_enclosing_contour(b, 0.60, 1.8, nn));
    CHECK(std::abs(v1 - v2) <= 1e-7);
}

TEST_CASE("kernel bound holds between the family contours") {
    const ModelParams p = separable_model();
    const RectContour ci = detail::family_contour(p, {}, 0.25, 1.0, 16, 0.5);
    const RectContour co = detail::family_contour(p, {}, 0.40, 1.5, 16, 0.25);
    REQUIRE(ci.strictly_inside(co));
    const auto ti = solve_contour(p, ci);
    const auto to = solve_contour(p, co);
    for (const StieltjesTriple& a : ti)
        for (const StieltjesTriple& b : to)
            CHECK(std::abs(two_point_kernel(a, b)) < 1.0);
}

TEST_CASE("summary: empty request, hand values, and family consistency") {
    const ModelParams p1 = mp_model(1.0);

    const CltSummary empty = clt_summary(p1, {});
    CHECK(empty.functions.empty());
    CHECK(empty.mean.empty());
    CHECK(empty.cov.empty());

    const CltSummary one = clt_summary(p1, {TestFunction::monomial(1)});
    REQUIRE(one.mean.size() == 1);
    REQUIRE(one.cov.size() == 1);
    CHECK(std::abs(one.mean[0]) <= 1e-5);
    CHECK(std::abs(one.cov[0][0] - 2.0) <= 1e-5);

    const ModelParams p = separable_model();
    const std::vector<TestFunction> fam{TestFunction::monomial(1),
                                        TestFunction::monomial(2),
                                        TestFunction::log_affine(1.0, 5.0)};
    const CltSummary s = clt_summary(p, fam);
    REQUIRE(s.mean.size() == 3);
    REQUIRE(s.cov.size() == 3);

    // symmetric by construction, PSD within tolerance
    Eigen::Matrix3d cm;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            CHECK(s.cov[i][j] == s.cov[j][i]);
            cm(i, j) = s.cov[i][j];
        }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cm);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);

    // entries agree with standalone calls on the same contours
    const RectContour inner = detail::family_contour(p, fam, 0.25, 1.0, 64, 0.5);
    const RectContour outer = detail::family_contour(p, fam, 0.40, 1.5, 64, 0.25);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(s.mean[i] - clt_mean(p, fam[i], inner)) <= 1e-9);
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(s.cov[i][j] - clt_cov(p, fam[i], fam[j], inner,
                                                 outer)) <= 1e-9);
    }
}

TEST_CASE("summary rejects a log cut through the support") {
    CHECK_THROWS_AS(clt_summary(mp_model(1.0), {TestFunction::log_affine()}),
                    BranchCutCrossing);
}
