#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "clt.hpp"
#include "errors.hpp"
#include "functional.hpp"
#include "solver.hpp"
#include "test_function.hpp"

namespace sepcov {

// Entry laws for X. Both are standardized with fourth moment exactly 3,
// which the fluctuation formulas assume; the three-point law is +-sqrt(3)
// with probability 1/6 each and 0 otherwise.
enum class EntryDistribution { gaussian, three_point };

// One simulation: B = (1/N) T2^{1/2} X T1 X' T2^{1/2} with X an N x n
// matrix of i.i.d. standardized entries, T1/T2 diagonal with the given
// spectra (optionally conjugated by Haar orthogonal matrices).
struct SimConfig {
    int big_n = 0; // N: B is N x N, t2_spectrum has length N
    int n = 0;     // t1_spectrum has length n
    std::vector<double> t1_spectrum;
    std::vector<double> t2_spectrum;
    EntryDistribution entry = EntryDistribution::gaussian;
    int reps = 0;
    std::uint64_t master_seed = 0;
    bool haar_conjugate = false;

    void validate() const {
        if (big_n < 1 || n < 1 || reps < 1)
            throw ConfigError("sim config: bigN, n, reps must all be >= 1");
        if (t1_spectrum.size() != static_cast<std::size_t>(n))
            throw ConfigError("sim config: t1_spectrum must have length n");
        if (t2_spectrum.size() != static_cast<std::size_t>(big_n))
            throw ConfigError("sim config: t2_spectrum must have length bigN");
        double t1_max = t1_spectrum.front();
        for (double v : t1_spectrum) {
            if (!std::isfinite(v))
                throw ConfigError("sim config: t1_spectrum has a non-finite entry");
            t1_max = std::max(t1_max, v);
        }
        if (t1_max <= 0.0)
            throw ConfigError("sim config: max(t1_spectrum) must be positive");
        for (double v : t2_spectrum)
            if (!std::isfinite(v) || v < 0.0)
                throw ConfigError("sim config: t2_spectrum entries must be "
                                  "finite and >= 0");
    }
};

struct RepRecord {
    std::uint64_t seed = 0;
    std::vector<double> lss_values; // centered statistics, one per function
    bool ok = true;
    std::string error;
};

struct SimResult {
    std::vector<std::string> f_labels;
    std::vector<RepRecord> per_rep;
    std::vector<double> empirical_mean;
    std::vector<std::vector<double>> empirical_var;
    bool variance_defined = false;
    std::vector<double> centering; // N * functional(f), one per function
    CltSummary theory;
    std::vector<double> z_scores;
};

// ---- deterministic RNG ----
// SplitMix64 streams keyed on (master_seed, rep_index). Gaussian variates
// come from a hand-rolled Box-Muller: the stdlib normal distribution's
// algorithm is implementation-defined, which would break byte-stable
// reproducibility across toolchains.

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform01() { // [0, 1), 53-bit resolution
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t rep_index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (rep_index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class EntrySampler {
public:
    EntrySampler(EntryDistribution law, SplitMix64& rng) : law_(law), rng_(rng) {}

    double next() {
        if (law_ == EntryDistribution::three_point) {
            const double u = rng_.uniform01();
            if (u < 1.0 / 6.0) return std::numbers::sqrt3;
            if (u < 1.0 / 3.0) return -std::numbers::sqrt3;
            return 0.0;
        }
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - rng_.uniform01(); // (0, 1], keeps log finite
        const double u2 = rng_.uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    EntryDistribution law_;
    SplitMix64& rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---- sampling ----

// Raw material of one replication, exposed so tests can recompute traces
// straight from X without an eigendecomposition.
struct SampleDraw {
    std::uint64_t seed = 0;
    Eigen::MatrixXd x;  // N x n
    Eigen::MatrixXd q1; // n x n Haar factor (empty unless haar_conjugate)
    Eigen::MatrixXd q2; // N x N Haar factor
};

namespace detail {

// Haar orthogonal factor: QR of a Gaussian matrix with the R diagonal sign
// convention fixed so Q is Haar-distributed, not just orthogonal.
inline Eigen::MatrixXd haar_factor(int dim, EntrySampler& gauss) {
    Eigen::MatrixXd g(dim, dim);
    for (int j = 0; j < dim; ++j)
        for (int i = 0; i < dim; ++i) g(i, j) = gauss.next();
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd& r = qr.matrixQR();
    for (int j = 0; j < dim; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

} // namespace detail

inline SampleDraw draw_sample(const SimConfig& cfg, int rep_index) {
    cfg.validate();
    if (rep_index < 0 || rep_index >= cfg.reps)
        throw ConfigError("rep_index out of range");
    SampleDraw d;
    d.seed = stream_seed(cfg.master_seed, static_cast<std::uint64_t>(rep_index));
    SplitMix64 rng(d.seed);
    EntrySampler entries(cfg.entry, rng);
    d.x.resize(cfg.big_n, cfg.n);
    for (int j = 0; j < cfg.n; ++j) // fixed column-major fill order
        for (int i = 0; i < cfg.big_n; ++i) d.x(i, j) = entries.next();
    if (cfg.haar_conjugate) {
        // Haar factors always use Gaussian material, whatever the entry law
        EntrySampler gauss(EntryDistribution::gaussian, rng);
        d.q1 = detail::haar_factor(cfg.n, gauss);
        d.q2 = detail::haar_factor(cfg.big_n, gauss);
    }
    return d;
}

inline Eigen::MatrixXd assemble_matrix(const SimConfig& cfg, const SampleDraw& d) {
    const Eigen::Map<const Eigen::VectorXd> s(cfg.t1_spectrum.data(), cfg.n);
    const Eigen::Map<const Eigen::VectorXd> t(cfg.t2_spectrum.data(), cfg.big_n);
    Eigen::MatrixXd b;
    if (cfg.haar_conjugate) {
        const Eigen::MatrixXd t1 = d.q1 * s.asDiagonal() * d.q1.transpose();
        const Eigen::MatrixXd t2h =
            d.q2 * t.cwiseSqrt().asDiagonal() * d.q2.transpose();
        b = t2h * (d.x * t1 * d.x.transpose()) * t2h;
    } else {
        const Eigen::VectorXd th = t.cwiseSqrt();
        b = th.asDiagonal() * (d.x * s.asDiagonal() * d.x.transpose()) *
            th.asDiagonal();
    }
    b /= static_cast<double>(cfg.big_n);
    b = 0.5 * (b + b.transpose()).eval(); // kill rounding asymmetry
    return b;
}

inline std::vector<double> sample_eigenvalues(const SimConfig& cfg, int rep_index) {
    const Eigen::MatrixXd b = assemble_matrix(cfg, draw_sample(cfg, rep_index));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b,
                                                            Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw EigenFailure("symmetric eigensolver failed on replication "
                           + std::to_string(rep_index));
    const Eigen::VectorXd& ev = es.eigenvalues(); // ascending
    return std::vector<double>(ev.data(), ev.data() + ev.size());
}

// ---- statistics ----

inline double lss(std::span<const double> eigenvalues, const TestFunction& f) {
    double acc = 0.0;
    for (double v : eigenvalues) acc += f(v);
    return acc;
}

inline ModelParams model_from_sim(const SimConfig& cfg) {
    cfg.validate();
    return ModelParams(static_cast<double>(cfg.n) / cfg.big_n,
                       from_eigenvalues(cfg.t1_spectrum, "H1n"),
                       from_eigenvalues(cfg.t2_spectrum, "H2n"));
}

// N * integral of f against the finite-n deterministic law at (c_n, H1n,
// H2n). This is the exact centering in G_n; centering at the limiting
// parameters instead would shift every statistic by O(sqrt(N)).
inline double centering_term(const SimConfig& cfg, const TestFunction& f,
                             const SolverConfig& solver_cfg = {}) {
    const ModelParams model = model_from_sim(cfg);
    const RectContour contour = auto_contour(model, &f);
    return cfg.big_n * functional(model, f, contour, solver_cfg);
}

inline SimResult run_experiment(const SimConfig& cfg,
                                const std::vector<TestFunction>& functions,
                                int threads = 0,
                                const SolverConfig& solver_cfg = {}) {
    cfg.validate();
    if (functions.empty())
        throw ConfigError("run_experiment: need at least one test function");

    const std::size_t nf = functions.size();
    SimResult res;
    res.f_labels.reserve(nf);
    for (const TestFunction& f : functions) res.f_labels.push_back(f.label());

    res.centering.reserve(nf);
    for (const TestFunction& f : functions)
        res.centering.push_back(centering_term(cfg, f, solver_cfg));
    res.theory = clt_summary(model_from_sim(cfg), functions, solver_cfg);

    // replication sweep: slots preassigned by rep index, so the assembled
    // result is identical for any thread count
    res.per_rep.assign(static_cast<std::size_t>(cfg.reps), RepRecord{});
    const auto worker = [&](int first, int stride) {
        for (int r = first; r < cfg.reps; r += stride) {
            RepRecord& rec = res.per_rep[static_cast<std::size_t>(r)];
            rec.seed = stream_seed(cfg.master_seed, static_cast<std::uint64_t>(r));
            try {
                const std::vector<double> ev = sample_eigenvalues(cfg, r);
                rec.lss_values.reserve(nf);
                for (std::size_t i = 0; i < nf; ++i)
                    rec.lss_values.push_back(lss(ev, functions[i]) -
                                             res.centering[i]);
            } catch (const Error& e) {
                rec.ok = false;
                rec.error = e.what();
            }
        }
    };
    int nthreads = threads;
    if (nthreads == 0) {
        nthreads = static_cast<int>(std::thread::hardware_concurrency());
        if (nthreads < 1) nthreads = 1;
    }
    nthreads = std::min(nthreads, cfg.reps);
    if (nthreads <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back(worker, t, nthreads);
        for (std::thread& th : pool) th.join();
    }

    std::vector<BatchError::Item> failures;
    for (std::size_t r = 0; r < res.per_rep.size(); ++r)
        if (!res.per_rep[r].ok) failures.push_back({r, res.per_rep[r].error});
    if (100 * failures.size() > static_cast<std::size_t>(cfg.reps))
        throw BatchError("run_experiment", std::move(failures));

    const std::size_t good = res.per_rep.size() - failures.size();
    res.empirical_mean.assign(nf, 0.0);
    for (const RepRecord& rec : res.per_rep) {
        if (!rec.ok) continue;
        for (std::size_t i = 0; i < nf; ++i)
            res.empirical_mean[i] += rec.lss_values[i];
    }
    for (double& v : res.empirical_mean) v /= static_cast<double>(good);

    res.empirical_var.assign(nf, std::vector<double>(nf, 0.0));
    res.variance_defined = good >= 2;
    if (res.variance_defined) {
        for (const RepRecord& rec : res.per_rep) {
            if (!rec.ok) continue;
            for (std::size_t i = 0; i < nf; ++i)
                for (std::size_t j = 0; j < nf; ++j)
                    res.empirical_var[i][j] +=
                        (rec.lss_values[i] - res.empirical_mean[i]) *
                        (rec.lss_values[j] - res.empirical_mean[j]);
        }
        for (auto& row : res.empirical_var)
            for (double& v : row) v /= static_cast<double>(good - 1);
    }

    res.z_scores.resize(nf);
    for (std::size_t i = 0; i < nf; ++i)
        res.z_scores[i] = (res.empirical_mean[i] - res.theory.mean[i]) /
                          std::sqrt(res.theory.cov[i][i] / static_cast<double>(good));
    return res;
}

} // namespace sepcov
