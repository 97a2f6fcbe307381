// hwm: solve, simulate, verify and sweep from a config file.

#include "hwm/runs.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Robust lifetime-ruin solver and simulator with high-watermark fees"};
    app.set_version_flag("--version", HWM_VERSION);
    app.require_subcommand(1);

    std::string config;
    std::string out;
    int threads = 0;
    bool quiet = false;

    for (const char* name : {"solve", "simulate", "verify", "sweep"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output directory");
        sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet", quiet, "Only report errors");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : hwm::kExitConfig;
    }

    hwm::RunOptions opt;
    if (!out.empty()) opt.out_dir = out;
    if (threads > 0) opt.threads = threads;
    opt.quiet = quiet;
    const std::string command = app.get_subcommands().front()->get_name();
    return hwm::run_command(command, config, opt, std::cout, std::cerr);
}
