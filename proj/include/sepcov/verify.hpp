#pragma once

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cli.hpp"

namespace sepcov {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string expected;
    std::string got;
    std::string tolerance;
    double seconds = 0.0;
};

struct VerifyOptions {
    int reps = 500;
    int threads = 0;
    bool inject_wrong_centering = false; // negative control: must fail check 7
    std::uint64_t master_seed = 20260817ULL;
    std::ostream* progress = nullptr;
};

namespace detail {

inline std::string sci(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

inline std::vector<std::pair<std::string, ModelParams>> reference_models() {
    const SpectralMeasure one = point_mass(1.0);
    std::vector<std::pair<std::string, ModelParams>> out;
    out.emplace_back("mp c=0.25", ModelParams(0.25, one, one));
    out.emplace_back("mp c=1", ModelParams(1.0, one, one));
    out.emplace_back("mp c=2", ModelParams(2.0, one, one));
    out.emplace_back("separable c=0.5",
                     ModelParams(0.5, SpectralMeasure({{1.0, 0.5}, {2.0, 0.5}}),
                                 SpectralMeasure({{1.0, 0.5}, {3.0, 0.5}})));
    return out;
}

// Closed-form transform for the single-atom model (both factors trivial):
// root of z m^2 + (z + 1 - c) m + 1 = 0 on the branch with Im m > 0 in the
// upper half-plane. Used as the independent reference path, no fixed-point
// solver involved.
inline cplx mp_transform(double c, cplx z) {
    if (z.imag() < 0.0) return std::conj(mp_transform(c, std::conj(z)));
    const cplx b = z + 1.0 - c;
    const cplx disc = std::sqrt(b * b - 4.0 * z);
    const cplx r1 = (-b + disc) / (2.0 * z);
    const cplx r2 = (-b - disc) / (2.0 * z);
    return r1.imag() > r2.imag() ? r1 : r2;
}

inline double mp_bulk_density(double c, double x) {
    const double lo = (1.0 - std::sqrt(c)) * (1.0 - std::sqrt(c));
    const double hi = (1.0 + std::sqrt(c)) * (1.0 + std::sqrt(c));
    if (x <= lo || x >= hi) return 0.0;
    return std::sqrt((hi - x) * (x - lo)) / (2.0 * std::numbers::pi * x);
}

inline double sample_skewness(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    return m3 / std::pow(m2, 1.5);
}

inline double sample_excess_kurtosis(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    return m4 / (m2 * m2) - 3.0;
}

template <class Fn>
CheckResult timed_check(const std::string& name, double time_limit_s, Fn&& fn) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        fn(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.got = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
    if (time_limit_s > 0.0 && r.seconds > time_limit_s) {
        r.passed = false;
        r.got += " [exceeded " + sci(time_limit_s) + " s budget]";
    }
    return r;
}

inline std::string read_file_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace detail

inline std::vector<CheckResult> run_acceptance(const VerifyOptions& opt = {}) {
    using detail::sci;
    std::vector<CheckResult> out;
    const auto models = detail::reference_models();
    const TestFunction fn_one = TestFunction::monomial(0);
    const TestFunction fn_x = TestFunction::monomial(1);
    const TestFunction fn_x2 = TestFunction::monomial(2);
    const TestFunction fn_x3 = TestFunction::monomial(3);

    const auto report = [&](const CheckResult& r) {
        if (opt.progress)
            *opt.progress << "[" << out.size() << "/9] " << r.name << " ... "
                          << (r.passed ? "PASS" : "FAIL") << " ("
                          << sci(r.seconds) << " s)\n"
                          << std::flush;
    };

    // 1. solver residuals on contour sweeps
    out.push_back(detail::timed_check(
        "solver residuals on reference models", 10.0, [&](CheckResult& r) {
            r.expected = "self-consistent equation residuals <= 1e-10 at all "
                         "256 contour nodes, 4 models";
            r.tolerance = "1e-10; < 10 s";
            double worst = 0.0;
            for (const auto& [name, p] : models) {
                const RectContour c = auto_contour(p);
                for (const StieltjesTriple& t : solve_contour(p, c))
                    worst = std::max(worst, t.residual);
            }
            r.got = "max residual " + sci(worst);
            r.passed = worst <= 1e-10;
        }));
    report(out.back());

    // 2. density against the closed-form bulk law at c=1
    out.push_back(detail::timed_check(
        "bulk density closed-form oracle (c=1)", 5.0, [&](CheckResult& r) {
            r.expected = "density within 1e-4 at 50 interior points; <= 1e-6 "
                         "outside the support";
            r.tolerance = "1e-4 inside, 1e-6 outside; < 5 s";
            const ModelParams p(1.0, point_mass(1.0), point_mass(1.0));
            double worst_in = 0.0;
            for (int i = 0; i < 50; ++i) {
                const double x = 0.1 + (3.9 - 0.1) * i / 49.0;
                worst_in = std::max(
                    worst_in, std::abs(density(p, x) -
                                       detail::mp_bulk_density(1.0, x)));
            }
            double worst_out = 0.0;
            // probe closer to the axis outside the support: at 1e-6 the
            // Stieltjes smoothing still leaks ~2e-6 of apparent density at
            // 0.2 from a hard edge, which is probe artifact, not mass
            for (double x : {-0.5, -0.2, 4.2, 4.5, 5.0})
                worst_out = std::max(worst_out, density(p, x, 1e-8));
            r.got = "max interior dev " + sci(worst_in) + ", max outside "
                    + sci(worst_out);
            r.passed = worst_in <= 1e-4 && worst_out <= 1e-6;
        }));
    report(out.back());

    // 3. functional identities: total mass and first moment
    out.push_back(detail::timed_check(
        "functional mass and first-moment identities", 0.0,
        [&](CheckResult& r) {
            r.expected = "integral of 1 is 1 (1e-9); integral of x equals "
                         "c*m1(h1)*m1(h2) (1e-8), 4 models";
            r.tolerance = "1e-9 and 1e-8";
            double worst_mass = 0.0, worst_trace = 0.0;
            for (const auto& [name, p] : models) {
                const RectContour c = auto_contour(p);
                worst_mass = std::max(worst_mass,
                                      std::abs(functional(p, fn_one, c) - 1.0));
                const double oracle = p.c * moment(p.h1, 1) * moment(p.h2, 1);
                worst_trace = std::max(worst_trace,
                                       std::abs(functional(p, fn_x, c) - oracle));
            }
            r.got = "mass dev " + sci(worst_mass) + ", first-moment dev "
                    + sci(worst_trace);
            r.passed = worst_mass <= 1e-9 && worst_trace <= 1e-8;
        }));
    report(out.back());

    // 4. kernel modulus bound and exchange symmetry on nested contours
    out.push_back(detail::timed_check(
        "two-point kernel bound and symmetry", 0.0, [&](CheckResult& r) {
            r.expected = "|kernel| < 1 on all inner x outer node pairs; "
                         "exchange symmetric";
            r.tolerance = "strict bound; symmetry 1e-12";
            double worst_mod = 0.0, worst_sym = 0.0;
            for (const auto& [name, p] : models) {
                const RectContour ci = detail::family_contour(p, {}, 0.25, 1.0,
                                                              64, 0.5);
                const RectContour co = detail::family_contour(p, {}, 0.40, 1.5,
                                                              64, 0.25);
                const auto ti = solve_contour(p, ci);
                const auto to = solve_contour(p, co);
                for (std::size_t i = 0; i < ti.size(); ++i)
                    for (std::size_t j = 0; j < to.size(); ++j) {
                        const cplx k = two_point_kernel(ti[i], to[j]);
                        worst_mod = std::max(worst_mod, std::abs(k));
                        if (i % 16 == 0 && j % 16 == 0)
                            worst_sym = std::max(
                                worst_sym,
                                std::abs(k - two_point_kernel(to[j], ti[i])));
                    }
            }
            r.got = "max |kernel| " + sci(worst_mod) + ", max asymmetry "
                    + sci(worst_sym);
            r.passed = worst_mod < 1.0 && worst_sym <= 1e-12;
        }));
    report(out.back());

    // 5. white-t2 reduction: general formulas vs the closed-form path
    out.push_back(detail::timed_check(
        "reduction to the classical one-factor formulas", 0.0,
        [&](CheckResult& r) {
            r.expected = "general mean/kernel equal the reduced closed-form "
                         "expressions for trivial t2";
            r.tolerance = "1e-6";
            double worst_mean = 0.0, worst_kernel = 0.0;
            for (double c : {0.25, 1.0, 2.0}) {
                const ModelParams p(c, point_mass(1.0), point_mass(1.0));
                const RectContour ci = detail::family_contour(p, {}, 0.25, 1.0,
                                                              64, 0.5);
                const RectContour co = detail::family_contour(p, {}, 0.40, 1.5,
                                                              64, 0.25);
                const auto reduced_integrand = [&](cplx z) {
                    const cplx m = detail::mp_transform(c, z);
                    const cplx q = m / (1.0 + m);
                    const cplx lead = c * m * q * q / (1.0 + m);
                    const cplx denom = 1.0 - c * q * q;
                    return lead / (denom * denom);
                };
                for (const TestFunction* f : {&fn_x, &fn_x2, &fn_x3}) {
                    std::vector<cplx> vals;
                    for (const cplx& z : ci.nodes())
                        vals.push_back((*f)(z)*reduced_integrand(z));
                    const double reduced =
                        (contour_sum(ci, vals) / cplx(0.0, -2.0 * std::numbers::pi))
                            .real();
                    const double general = clt_mean(p, *f, ci);
                    worst_mean = std::max(worst_mean, std::abs(general - reduced));
                }
                const auto ti = solve_contour(p, ci);
                const auto to = solve_contour(p, co);
                for (std::size_t i = 0; i < ti.size(); i += 8)
                    for (std::size_t j = 0; j < to.size(); j += 8) {
                        const cplx m1 = detail::mp_transform(c, ti[i].z);
                        const cplx m2 = detail::mp_transform(c, to[j].z);
                        const cplx reduced =
                            1.0 + m1 * m2 * (ti[i].z - to[j].z) / (m2 - m1);
                        worst_kernel = std::max(
                            worst_kernel,
                            std::abs(two_point_kernel(ti[i], to[j]) - reduced));
                    }
            }
            r.got = "max mean dev " + sci(worst_mean) + ", max kernel dev "
                    + sci(worst_kernel);
            r.passed = worst_mean <= 1e-6 && worst_kernel <= 1e-6;
        }));
    report(out.back());

    // 6. exact mean/variance oracles for the trace statistic
    out.push_back(detail::timed_check(
        "trace-statistic mean and variance oracles", 0.0, [&](CheckResult& r) {
            r.expected = "clt_mean(x) = 0 (1e-7); clt_cov(x,x) = "
                         "2*c*m2(h1)*m2(h2) (1e-5), 4 models";
            r.tolerance = "1e-7 and 1e-5";
            double worst_mean = 0.0, worst_cov = 0.0;
            for (const auto& [name, p] : models) {
                const RectContour ci = detail::family_contour(p, {}, 0.25, 1.0,
                                                              64, 0.5);
                const RectContour co = detail::family_contour(p, {}, 0.40, 1.5,
                                                              64, 0.25);
                worst_mean = std::max(worst_mean, std::abs(clt_mean(p, fn_x, ci)));
                const double oracle =
                    2.0 * p.c * moment(p.h1, 2) * moment(p.h2, 2);
                worst_cov = std::max(
                    worst_cov,
                    std::abs(clt_cov(p, fn_x, fn_x, ci, co) - oracle));
            }
            r.got = "max |mean| " + sci(worst_mean) + ", max cov dev "
                    + sci(worst_cov);
            r.passed = worst_mean <= 1e-7 && worst_cov <= 1e-5;
        }));
    report(out.back());

    // 7. Monte Carlo CLT bands at desk scale
    out.push_back(detail::timed_check(
        "Monte Carlo CLT bands (c=1, both entry laws)", 600.0,
        [&](CheckResult& r) {
            r.expected = "empirical mean within 3 SE, variance within 30%, "
                         "|skewness| <= 0.35 for f in {x, x^2}";
            r.tolerance = "3*sqrt(var/reps); [0.7,1.3]*var; 0.35; < 600 s";
            if (opt.reps < 100) {
                r.passed = false;
                r.got = "insufficient replications (" + std::to_string(opt.reps)
                        + ") for CLT power; need >= 100";
                return;
            }
            const std::vector<TestFunction> fns{fn_x, fn_x2};
            double worst_z = 0.0, worst_ratio_dev = 0.0, worst_skew = 0.0;
            for (EntryDistribution law :
                 {EntryDistribution::gaussian, EntryDistribution::three_point}) {
                SimConfig cfg;
                cfg.big_n = 200;
                cfg.n = 200;
                cfg.t1_spectrum.assign(200, 1.0);
                cfg.t2_spectrum.assign(200, 1.0);
                cfg.entry = law;
                cfg.reps = opt.reps;
                cfg.master_seed =
                    opt.master_seed +
                    (law == EntryDistribution::three_point ? 1 : 0);
                const SimResult res = run_experiment(cfg, fns, opt.threads);
                for (std::size_t i = 0; i < fns.size(); ++i) {
                    const double adj_mean =
                        res.empirical_mean[i] -
                        (opt.inject_wrong_centering ? 1.0 : 0.0);
                    const double se =
                        std::sqrt(res.theory.cov[i][i] / cfg.reps);
                    worst_z = std::max(
                        worst_z,
                        std::abs(adj_mean - res.theory.mean[i]) / se);
                    worst_ratio_dev = std::max(
                        worst_ratio_dev,
                        std::abs(res.empirical_var[i][i] / res.theory.cov[i][i] -
                                 1.0));
                    std::vector<double> vals;
                    for (const RepRecord& rec : res.per_rep)
                        if (rec.ok) vals.push_back(rec.lss_values[i]);
                    worst_skew = std::max(
                        worst_skew, std::abs(detail::sample_skewness(vals)));
                }
            }
            r.got = "max |z| " + sci(worst_z) + ", max var ratio dev "
                    + sci(worst_ratio_dev) + ", max |skew| " + sci(worst_skew);
            r.passed =
                worst_z <= 3.0 && worst_ratio_dev <= 0.3 && worst_skew <= 0.35;
        }));
    report(out.back());

    // 8. sign-indefinite factor: eigenvalue bracket plus variance oracle
    out.push_back(detail::timed_check(
        "sign-indefinite factor model", 0.0, [&](CheckResult& r) {
            r.expected = "all eigenvalues inside the support bracket padded by "
                         "0.2 over 50 reps; clt_cov(x,x) = 0.5";
            r.tolerance = "bracket +- 0.2; cov 1e-5";
            SimConfig cfg;
            cfg.big_n = 400;
            cfg.n = 100;
            cfg.t1_spectrum.assign(25, -1.0);
            cfg.t1_spectrum.resize(100, 1.0);
            cfg.t2_spectrum.assign(400, 1.0);
            cfg.entry = EntryDistribution::gaussian;
            cfg.reps = 50;
            cfg.master_seed = opt.master_seed + 7;
            const ModelParams model = model_from_sim(cfg);
            const SupportBounds b = support_bounds(model);
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (int rep = 0; rep < cfg.reps; ++rep) {
                const std::vector<double> ev = sample_eigenvalues(cfg, rep);
                lo = std::min(lo, ev.front());
                hi = std::max(hi, ev.back());
            }
            const bool inside = lo >= b.lower - 0.2 && hi <= b.upper + 0.2;
            const CltSummary s = clt_summary(model, {fn_x});
            const double cov_dev = std::abs(s.cov[0][0] - 0.5);
            r.got = "eigenvalue range [" + sci(lo) + ", " + sci(hi)
                    + "] vs bracket [" + sci(b.lower) + ", " + sci(b.upper)
                    + "]; cov dev " + sci(cov_dev);
            r.passed = inside && cov_dev <= 1e-5;
        }));
    report(out.back());

    // 9. byte-identical outputs across thread counts
    out.push_back(detail::timed_check(
        "byte-identical simulation outputs across thread counts", 0.0,
        [&](CheckResult& r) {
            r.expected = "per-replication CSV identical for repeated runs at 1 "
                         "and 8 threads";
            r.tolerance = "exact bytes";
            const json sim = {{"bigN", 60},
                              {"n", 60},
                              {"t1_spectrum", {{"constant", 1.0}}},
                              {"t2_spectrum", {{"constant", 1.0}}},
                              {"entry", "gaussian"},
                              {"reps", 30},
                              {"master_seed", opt.master_seed + 99}};
            const auto root =
                std::filesystem::temp_directory_path() /
                ("sepcov-verify-" + std::to_string(
                                        static_cast<unsigned long>(::getpid())));
            std::vector<std::string> bytes;
            for (int run = 0; run < 4; ++run) {
                const int threads = run < 2 ? 1 : 8;
                json config = {{"sim", sim},
                               {"functions", {"x", "x^2"}},
                               {"threads", threads},
                               {"output_prefix", "det"}};
                CliOptions copt;
                copt.out_dir = root / ("run" + std::to_string(run));
                if (cmd_simulate(config, copt) != exit_code::ok)
                    throw Error("cmd_simulate failed in determinism check");
                bytes.push_back(detail::read_file_bytes(copt.out_dir /
                                                        "det_per_rep.csv"));
            }
            std::error_code ec;
            std::filesystem::remove_all(root, ec);
            const bool same = bytes[0] == bytes[1] && bytes[1] == bytes[2] &&
                              bytes[2] == bytes[3];
            r.got = same ? "4 runs identical"
                         : "outputs differ between runs/thread counts";
            r.passed = same;
        }));
    report(out.back());

    return out;
}

// verify command: runs the acceptance suite and prints the result table.
inline int cmd_verify(const json& config, const CliOptions& opt,
                      std::ostream& table_out, std::ostream& progress) {
    check_keys(config, "verify config", {},
               {"reps", "threads", "inject_wrong_centering"});
    VerifyOptions vo;
    if (config.contains("reps"))
        vo.reps = static_cast<int>(get_int(config["reps"], "reps"));
    if (config.contains("threads"))
        vo.threads = static_cast<int>(get_int(config["threads"], "threads"));
    if (config.contains("inject_wrong_centering"))
        vo.inject_wrong_centering =
            get_bool(config["inject_wrong_centering"], "inject_wrong_centering");
    if (opt.seed_override) vo.master_seed = *opt.seed_override;
    vo.progress = &progress;

    const std::vector<CheckResult> results = run_acceptance(vo);
    int failed = 0;
    table_out << "\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const CheckResult& r = results[i];
        if (!r.passed) ++failed;
        table_out << (i + 1) << ". " << r.name << ": "
                  << (r.passed ? "PASS" : "FAIL") << "  ["
                  << std::fixed << std::setprecision(1) << r.seconds
                  << std::defaultfloat << " s]\n"
                  << "   expected:  " << r.expected << "\n"
                  << "   got:       " << r.got << "\n"
                  << "   tolerance: " << r.tolerance << "\n";
    }
    table_out << "\n"
              << (results.size() - static_cast<std::size_t>(failed)) << "/"
              << results.size() << " checks passed\n";
    return failed == 0 ? exit_code::ok : exit_code::verification;
}

// ---------------------------------------------------------------------------
// top-level dispatch
// ---------------------------------------------------------------------------

inline int run_cli(const std::string& command,
                   const std::optional<std::filesystem::path>& config_path,
                   const CliOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        json config = json::object();
        if (config_path) {
            std::ifstream is(*config_path);
            if (!is)
                throw ConfigError("cannot open config file "
                                  + config_path->string());
            try {
                config = json::parse(is);
            } catch (const json::parse_error& e) {
                throw ConfigError(config_path->string() + ": " + e.what());
            }
        } else if (command != "verify") {
            throw ConfigError(command + ": a config file is required");
        }
        if (command == "density") return cmd_density(config, opt);
        if (command == "clt") return cmd_clt(config, opt);
        if (command == "simulate") return cmd_simulate(config, opt);
        if (command == "verify") return cmd_verify(config, opt, out, err);
        throw ConfigError("unknown command '" + command + "'");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_code::config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::computation;
    }
}

} // namespace sepcov
