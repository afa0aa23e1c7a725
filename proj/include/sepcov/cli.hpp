#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "serialize.hpp"

namespace sepcov {

// Exit codes shared by every command.
namespace exit_code {
constexpr int ok = 0;
constexpr int config = 1;      // bad config file or schema violation
constexpr int computation = 2; // solver/quadrature/simulation failure
constexpr int verification = 3; // acceptance checks failed
} // namespace exit_code

struct CliOptions {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed_override;
};

namespace detail {

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error("cannot open output file " + path.string());
    os << content;
    os.flush();
    if (!os)
        throw Error("failed while writing " + path.string());
}

inline std::string filename_safe(const std::string& label) {
    std::string out;
    for (char ch : label) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                        (ch >= '0' && ch <= '9') || ch == '-' || ch == '_' ||
                        ch == '.';
        out += ok ? ch : '_';
    }
    return out.empty() ? "f" : out;
}

inline std::vector<TestFunction> functions_from_config(const json& arr,
                                                       const std::string& ctx) {
    if (!arr.is_array())
        throw ConfigError(ctx + ": expected an array of test functions");
    std::vector<TestFunction> fns;
    for (const json& f : arr) fns.push_back(function_from_json(f, ctx));
    return fns;
}

} // namespace detail

// density: sweep the reconstructed density over a grid and emit x,density.
inline int cmd_density(const json& config, const CliOptions& opt) {
    check_keys(config, "density config", {"model", "grid"},
               {"v_probe", "solver", "output"});
    const ModelParams model = model_from_json(config["model"], "model");
    const json& grid = config["grid"];
    check_keys(grid, "grid", {"x_min", "x_max", "points"});
    const double x_min = get_double(grid["x_min"], "grid.x_min");
    const double x_max = get_double(grid["x_max"], "grid.x_max");
    const long points = get_int(grid["points"], "grid.points");
    if (points < 1 || x_max < x_min)
        throw ConfigError("grid: need points >= 1 and x_max >= x_min");
    double v_probe = 1e-6;
    if (config.contains("v_probe")) {
        v_probe = get_double(config["v_probe"], "v_probe");
        if (!(v_probe > 0.0))
            throw ConfigError("v_probe must be positive");
    }
    SolverConfig solver;
    if (config.contains("solver"))
        solver = solver_from_json(config["solver"], "solver");

    std::vector<double> xs(static_cast<std::size_t>(points));
    for (long i = 0; i < points; ++i)
        xs[static_cast<std::size_t>(i)] =
            points == 1 ? x_min
                        : x_min + (x_max - x_min) * static_cast<double>(i) /
                              static_cast<double>(points - 1);
    std::vector<cplx> zs;
    zs.reserve(xs.size());
    for (double x : xs) zs.emplace_back(x, v_probe);

    // one warm-started sweep rather than independent cold solves per point
    const std::vector<StieltjesTriple> triples = solve_along(model, zs, solver);
    std::vector<double> dens(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = triples[i].m.imag() / std::numbers::pi;
        dens[i] = d < 1e-9 ? 0.0 : d;
    }

    std::ostringstream csv;
    write_density_csv(csv, xs, dens);
    const std::string name = config.contains("output")
                                 ? get_string(config["output"], "output")
                                 : "density.csv";
    detail::write_file(opt.out_dir / name, csv.str());
    return exit_code::ok;
}

// clt: means and covariance matrix for a function family.
inline int cmd_clt(const json& config, const CliOptions& opt) {
    check_keys(config, "clt config", {"model", "functions"},
               {"nodes_per_edge", "solver", "output_prefix"});
    const ModelParams model = model_from_json(config["model"], "model");
    const std::vector<TestFunction> fns =
        detail::functions_from_config(config["functions"], "functions");
    int nodes = 64;
    if (config.contains("nodes_per_edge")) {
        nodes = static_cast<int>(get_int(config["nodes_per_edge"], "nodes_per_edge"));
        if (nodes < 2 || nodes % 2 != 0)
            throw ConfigError("nodes_per_edge must be even and >= 2");
    }
    SolverConfig solver;
    if (config.contains("solver"))
        solver = solver_from_json(config["solver"], "solver");
    const std::string prefix = config.contains("output_prefix")
                                   ? get_string(config["output_prefix"],
                                                "output_prefix")
                                   : "clt";

    const CltSummary summary = clt_summary(model, fns, solver, nodes);

    detail::write_file(opt.out_dir / (prefix + "_summary.json"),
                       to_json(summary).dump(2) + "\n");
    std::ostringstream csv;
    write_clt_csv(csv, summary);
    detail::write_file(opt.out_dir / (prefix + "_summary.csv"), csv.str());
    return exit_code::ok;
}

// simulate: Monte Carlo sweep plus theory comparison and QQ data.
inline int cmd_simulate(const json& config, const CliOptions& opt) {
    check_keys(config, "simulate config", {"sim", "functions"},
               {"threads", "solver", "output_prefix"});
    SimConfig sim = sim_from_json(config["sim"], "sim");
    if (opt.seed_override) sim.master_seed = *opt.seed_override;
    const std::vector<TestFunction> fns =
        detail::functions_from_config(config["functions"], "functions");
    if (fns.empty())
        throw ConfigError("simulate config: functions must be nonempty");
    int threads = 0;
    if (config.contains("threads")) {
        threads = static_cast<int>(get_int(config["threads"], "threads"));
        if (threads < 0)
            throw ConfigError("threads must be >= 0 (0 = auto)");
    }
    SolverConfig solver;
    if (config.contains("solver"))
        solver = solver_from_json(config["solver"], "solver");
    const std::string prefix = config.contains("output_prefix")
                                   ? get_string(config["output_prefix"],
                                                "output_prefix")
                                   : "sim";

    const SimResult result = run_experiment(sim, fns, threads, solver);

    detail::write_file(opt.out_dir / (prefix + "_result.json"),
                       to_json(result).dump(2) + "\n");
    std::ostringstream per_rep;
    write_per_rep_csv(per_rep, result);
    detail::write_file(opt.out_dir / (prefix + "_per_rep.csv"), per_rep.str());
    std::ostringstream summary;
    write_summary_csv(summary, result);
    detail::write_file(opt.out_dir / (prefix + "_summary.csv"), summary.str());
    for (std::size_t i = 0; i < fns.size(); ++i) {
        std::ostringstream qq;
        write_qq_csv(qq, result, i);
        detail::write_file(opt.out_dir / (prefix + "_qq_" +
                                          detail::filename_safe(fns[i].label()) +
                                          ".csv"),
                           qq.str());
    }
    return exit_code::ok;
}

} // namespace sepcov
