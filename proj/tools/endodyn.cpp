#include "endodyn/commands.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"endodyn: endogenous random averaging dynamics simulator and diagnostics"};
    app.require_subcommand(1);

    endodyn::CliOptions opts;
    std::string out_dir;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "path to the run-config JSON")->required();
        sub->add_option("--out", out_dir, "output directory (overrides config output_dir)");
        sub->add_option("--seed", seed, "master seed (overrides config master_seed)");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "run trajectories and write CSV + summary");
    CLI::App* diagnose = app.add_subcommand("diagnose", "run the diagnostics suite");
    CLI::App* sweep = app.add_subcommand("sweep", "run a parameter/seed sweep");
    add_common(simulate);
    add_common(diagnose);
    add_common(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // CLI11 returns 0 for --help; anything else is a usage error.
        return code == 0 ? 0 : endodyn::kExitConfig;
    }

    auto finalize = [&](CLI::App* sub) {
        if (sub->count("--out") > 0) opts.out_dir = out_dir;
        if (sub->count("--seed") > 0) opts.seed_override = seed;
    };

    if (simulate->parsed()) {
        finalize(simulate);
        return endodyn::cmd_simulate(opts);
    }
    if (diagnose->parsed()) {
        finalize(diagnose);
        return endodyn::cmd_diagnose(opts);
    }
    finalize(sweep);
    return endodyn::cmd_sweep(opts);
}
