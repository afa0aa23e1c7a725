// Limiting mean and covariance of several spectral statistics on a
// two-sided separable model, printed as a small table. The covariance of
// the pair (tr B, tr B^2, log det(B + 5)) is computed on one shared set of
// nested contours.

#include <cstdio>
#include <vector>

#include <sepcov/clt.hpp>

using namespace sepcov;

int main() {
    const ModelParams p(0.5, SpectralMeasure({{1.0, 0.5}, {2.0, 0.5}}),
                        SpectralMeasure({{1.0, 0.5}, {3.0, 0.5}}));
    const std::vector<TestFunction> fns{
        TestFunction::monomial(1),
        TestFunction::monomial(2),
        TestFunction::log_affine(1.0, 5.0),
    };

    const CltSummary s = clt_summary(p, fns);

    std::printf("model: c = %.3g, h1 atoms = %zu, h2 atoms = %zu\n", p.c,
                p.h1.atoms().size(), p.h2.atoms().size());
    std::printf("contours: %d nodes per edge, refinement deltas %.1e / %.1e\n\n",
                s.contour_meta.nodes_per_edge, s.contour_meta.mean_delta,
                s.contour_meta.cov_delta);

    std::printf("%-12s %12s %12s\n", "f", "mean", "variance");
    for (std::size_t i = 0; i < fns.size(); ++i)
        std::printf("%-12s %12.6f %12.6f\n", s.functions[i].label().c_str(),
                    s.mean[i], s.cov[i][i]);

    std::printf("\ncovariance matrix:\n");
    for (std::size_t i = 0; i < fns.size(); ++i) {
        for (std::size_t j = 0; j < fns.size(); ++j)
            std::printf(" %12.6f", s.cov[i][j]);
        std::printf("\n");
    }
    return 0;
}
