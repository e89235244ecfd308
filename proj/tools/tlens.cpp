#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tlens/config.hpp"
#include "tlens/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"telescoping-lens experiment runner"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path;
    bool gnuplot = false;

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "config file")->required();
    run->add_flag("--emit-gnuplot", gnuplot, "write companion gnuplot scripts");

    auto* resume = app.add_subcommand("resume", "continue a run from a checkpoint");
    resume->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    resume->add_option("config", config_path, "config file")->required();

    auto* validate = app.add_subcommand("validate", "schema-check a config file");
    validate->add_option("config", config_path, "config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(validate)) {
            tlens::ExperimentConfig::load(config_path);
            std::cout << "ok\n";
            return 0;
        }
        const auto cfg = tlens::ExperimentConfig::load(config_path);
        if (app.got_subcommand(run)) {
            tlens::run_experiment(cfg);
            if (gnuplot) tlens::emit_gnuplot(cfg);
        } else {
            tlens::resume_experiment(ckpt_path, cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
