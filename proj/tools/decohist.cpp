#include "decohist/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"decohist - decoherent histories scenarios"};
    decohist::cli::RunOptions opt;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    app.add_option("kind", opt.kind, "scenario kind")->required()->check(CLI::IsMember(decohist::cli::kinds()));
    app.add_option("--config", opt.config_path, "scenario file")->required();
    app.add_option("--set", opt.overrides, "override section.key=value")->allow_extra_args(false);
    auto* seed_opt = app.add_option("--seed", seed, "master seed");
    auto* threads_opt = app.add_option("--threads", threads, "worker cap");
    app.add_option("--out", opt.out_dir, "output directory");
    app.allow_extras(false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (seed_opt->count()) opt.seed = seed;
    if (threads_opt->count()) opt.threads = threads;
    return decohist::cli::run_scenario(opt, std::cerr);
}
