// Prints the limiting spectral density of three models as CSV on stdout:
//
//   ./density_sweep > density.csv
//
// Columns: x, then one density column per model. Points outside a model's
// support print as 0.

#include <cstdio>
#include <vector>

#include <sepcov/solver.hpp>

using namespace sepcov;

int main() {
    const SpectralMeasure one = point_mass(1.0);
    const std::vector<std::pair<const char*, ModelParams>> models{
        {"mp_quarter", ModelParams(0.25, one, one)},
        {"mp_square", ModelParams(1.0, one, one)},
        {"separable",
         ModelParams(0.5, SpectralMeasure({{1.0, 0.5}, {2.0, 0.5}}),
                     SpectralMeasure({{1.0, 0.5}, {3.0, 0.5}}))},
    };

    // common grid covering every support with a little slack
    double lo = 0.0, hi = 0.0;
    for (const auto& [name, p] : models) {
        const SupportBounds b = support_bounds(p);
        lo = std::min(lo, b.lower);
        hi = std::max(hi, b.upper);
    }
    lo -= 0.25;
    hi += 0.25;

    std::printf("x");
    for (const auto& [name, p] : models) std::printf(",%s", name);
    std::printf("\n");

    const int points = 400;
    for (int i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * i / (points - 1);
        std::printf("%.6g", x);
        for (const auto& [name, p] : models)
            std::printf(",%.6g", density(p, x));
        std::printf("\n");
    }
    return 0;
}
