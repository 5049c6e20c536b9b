#include "somcot/harness.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Transport distances between Markov chains from sampled transitions"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> gamma;
    std::optional<std::int64_t> iters;
    std::optional<std::string> preset;
    std::optional<std::string> compare_oracle;
    std::optional<unsigned> threads;

    for (const char* name : {"solve", "oracle", "model-select", "enc-dec", "dist-matrix", "sweep"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--gamma", gamma);
        sub->add_option("--iters", iters, "iterations (replaces any iteration grid)");
        sub->add_option("--preset", preset)->check(CLI::IsMember(somcot::preset_names()));
        sub->add_option("--compare-oracle", compare_oracle, "oracle output path, or auto");
        sub->add_option("--threads", threads);
    }
    CLI11_PARSE(app, argc, argv);

    try {
        somcot::ExperimentConfig config = config_path.empty() ? somcot::ExperimentConfig{} : somcot::load_config(config_path);
        config.command = app.get_subcommands().front()->get_name();
        if (preset) {
            config.preset = *preset;
            somcot::apply_preset(config.solver, *preset);
        }
        if (seed) {
            config.solver.seed = *seed;
            config.seeds = {*seed};
        }
        if (gamma) config.solver.gamma = *gamma;
        if (iters) {
            config.solver.iterations = *iters;
            config.iterations_grid.clear();
        }
        if (out) config.out = *out;
        if (compare_oracle) config.compare_oracle = *compare_oracle;
        if (threads) config.threads = *threads;
        return somcot::run_command(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
