// Command-line front end: `run` executes a federated experiment from a config
// file (every key overridable by a flag), `params` prints the model size.

#include <cstdint>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "fedfnn/fedfnn.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Federated fuzzy-rule classifier simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a federated experiment");
    std::string config_path;
    run->add_option("--config", config_path, "Flat key = value config file")->required();
    std::map<std::string, std::string> overrides;
    const char* keys[] = {"dataset", "alpha",  "uncertainty", "clients", "rules",
                          "erl-iters", "coop-rounds", "beta", "lr",      "epochs",
                          "batch",    "folds",  "repeats",     "seed",   "baseline",
                          "out"};
    for (const char* key : keys)
        run->add_option_function<std::string>(
            "--" + std::string(key),
            [key, &overrides](const std::string& value) { overrides[key] = value; });

    auto* params = app.add_subcommand("params", "Print the trainable parameter count");
    std::int64_t d = 0, c = 0, k = 0;
    params->add_option("--d", d, "Feature dimension")->required();
    params->add_option("--c", c, "Class count")->required();
    params->add_option("--k", k, "Rule count")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (params->parsed()) {
            std::cout << fedfnn::param_count(d, c, k) << "\n";
            return 0;
        }

        const fedfnn::RunOptions options = fedfnn::load_run_options(config_path, overrides);
        const fedfnn::RunMetrics metrics = fedfnn::run_experiment(options);
        std::cout << "folds: " << metrics.folds.size() << "\n"
                  << "mean accuracy: " << metrics.mean_accuracy << "\n"
                  << "std accuracy: " << metrics.std_accuracy << "\n"
                  << "wall time (s): " << metrics.wall_time_seconds << "\n"
                  << "metrics written to: " << options.out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
