// Batch front end: ferro {solve|verify|sweep} --config PATH [options]
#include "CLI11.hpp"
#include "ferro/cli.hpp"

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv)
{
    using namespace ferro::cli;

    CLI::App app{"Ferrofluid saddle-point solver"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    std::string state;
    bool deterministic = false;
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<std::string> axes;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "Run configuration")->required();
        sub->add_option("--out", out, "Output directory (overrides output.directory)");
        sub->add_flag("--deterministic", deterministic, "Omit timings so reruns are bit-identical");
        sub->add_option("--seed", seed, "Probe generator seed (overrides solver.seed)");
        sub->add_option("--threads", threads, "Worker threads for sweeps")->check(CLI::PositiveNumber);
    };
    CLI::App* solve = app.add_subcommand("solve", "Run the saddle solver and write fields and report");
    common(solve);
    CLI::App* verify = app.add_subcommand("verify", "Re-run the verification suite on a saved state");
    common(verify);
    verify->add_option("--state", state, "Directory written by solve")->required();
    CLI::App* sweep = app.add_subcommand("sweep", "Cartesian parameter sweep");
    common(sweep);
    sweep->add_option("axes", axes, "key=v1,v2,... (one per swept key)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    Overrides ov;
    if (!out.empty())
        ov.out = out;
    ov.deterministic = deterministic;
    if (app.got_subcommand(solve) ? solve->count("--seed") : app.got_subcommand(verify) ? verify->count("--seed")
                                                                                          : sweep->count("--seed"))
        ov.seed = seed;
    ov.threads = threads;

    if (app.got_subcommand(solve))
        return cmd_solve(config, ov);
    if (app.got_subcommand(verify))
        return cmd_verify(config, state, ov);
    return cmd_sweep(config, axes, ov);
}
