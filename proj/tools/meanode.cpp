#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "meanode/cli.hpp"

namespace {

int env_workers() {
    const char* env = std::getenv("MEANODE_WORKERS");
    if (env) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return meanode::default_workers();
}

void add_common(CLI::App* sub, meanode::RunManifest& mf) {
    sub->add_option("--config", mf.config_path, "flat JSON run configuration");
    sub->add_option("--out", mf.out_dir, "output directory");
    sub->add_option("--workers", mf.workers, "worker thread count");
    sub->add_flag("--fast", mf.fast, "desk-scale reference (300x300 instead of 1000x1000)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&mf](std::uint64_t s) { mf.seed_override = s; },
        "master seed override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"residual-network training dynamics laboratory"};
    app.require_subcommand(1);

    meanode::RunManifest mf;
    mf.workers = env_workers();

    auto* train = app.add_subcommand("train", "train one finite net");
    add_common(train, mf);
    auto* reference = app.add_subcommand("reference", "train a limit-model surrogate");
    add_common(reference, mf);
    auto* sweep = app.add_subcommand("sweep", "run a sweep over one axis");
    add_common(sweep, mf);
    auto* lazy = app.add_subcommand("lazy", "train the tangent (lazy) model");
    add_common(lazy, mf);
    auto* phase = app.add_subcommand("phase", "residual-scale phase suite");
    add_common(phase, mf);
    auto* figure = app.add_subcommand("figure", "reproduce one figure");
    add_common(figure, mf);
    figure->add_option("tag", mf.figure, "figure tag: 1, 2a, 2b, 3a, 3b, 4a, 4b, 4c")
        ->required();

    CLI11_PARSE(app, argc, argv);

    for (auto* sub : {train, reference, sweep, lazy, phase, figure}) {
        if (sub->parsed()) {
            mf.command = sub->get_name();
            if (mf.command != "figure" && mf.config_path.empty()) {
                std::cerr << "config error at '--config': a config file is required\n";
                return meanode::exit_config;
            }
            return meanode::dispatch(mf);
        }
    }
    return meanode::exit_config;
}
