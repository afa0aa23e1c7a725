// sepcov command-line front end: density sweeps, CLT summaries, Monte Carlo
// experiments, and the self-verification suite. Each subcommand reads one
// JSON config and writes its outputs under --out.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <sepcov/verify.hpp>

int main(int argc, char** argv) {
    CLI::App app{"linear spectral statistics for separable sample covariance "
                 "models"};
    app.require_subcommand(1);

    std::string config_file;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;

    const auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("config", config_file,
                                  "JSON config file for this command");
        if (config_required) c->required();
        c->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")
            ->capture_default_str();
        sub->add_option("--seed", seed_override,
                        "override the master seed from the config");
    };

    auto* density = app.add_subcommand(
        "density", "sweep the limiting spectral density over a grid");
    add_common(density, true);
    auto* clt = app.add_subcommand(
        "clt", "compute limiting mean and covariance of spectral statistics");
    add_common(clt, true);
    auto* simulate = app.add_subcommand(
        "simulate", "run a seeded Monte Carlo experiment against the theory");
    add_common(simulate, true);
    auto* verify = app.add_subcommand(
        "verify", "run the built-in acceptance checks");
    add_common(verify, false);

    CLI11_PARSE(app, argc, argv);

    sepcov::CliOptions opt;
    opt.out_dir = out_dir;
    opt.seed_override = seed_override;

    std::string command;
    for (const CLI::App* sub : app.get_subcommands()) command = sub->get_name();

    std::optional<std::filesystem::path> config_path;
    if (!config_file.empty()) config_path = config_file;

    return sepcov::run_cli(command, config_path, opt, std::cout, std::cerr);
}
