#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedfnn/data.hpp"
#include "fedfnn/federation.hpp"

namespace fedfnn {

// Trainable parameters of a bank of K rules: per rule D centers, D spreads
// and a (D+1) x C consequent.
inline std::int64_t param_count(std::int64_t feature_dim, std::int64_t class_count,
                                std::int64_t rules) {
    if (feature_dim < 1 || class_count < 1 || rules < 1)
        throw std::invalid_argument("param count: dimensions must be positive");
    return rules * (2 * feature_dim + (feature_dim + 1) * class_count);
}

enum class BaselineMode { none, fedavg };

// Everything a run needs: the experiment knobs plus harness-level settings.
struct RunOptions {
    ExperimentConfig experiment;
    std::string dataset_path;
    std::string out_dir = "out";
    int repeats = 1;
    BaselineMode baseline = BaselineMode::none;
};

struct FoldRecord {
    int repeat = 0;
    int fold = 0;
    std::vector<RoundRecord> rounds;
    std::vector<double> final_client_accuracy;
    double mean_accuracy = 0.0;
    int final_rule_count = 0;
    ActivationMatrix final_activation;
    std::vector<int> final_rule_ids;
};

struct RunMetrics {
    std::vector<FoldRecord> folds;  // repeats x folds entries, failed runs excluded
    int failed_runs = 0;            // runs dropped because training diverged
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    double mean_final_rule_count = 0.0;
    double wall_time_seconds = 0.0;  // reported on stdout, not written to files
};

// Flat "key = value" config file; '#' starts a comment. Keys match the CLI
// flag names (dashes and underscores are interchangeable).
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::map<std::string, std::string> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        const std::size_t eq = view.find('=');
        if (eq == std::string_view::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        std::string key(detail::trim(view.substr(0, eq)));
        std::string value(detail::trim(view.substr(eq + 1)));
        if (key.empty() || value.empty())
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        for (char& c : key)
            if (c == '_') c = '-';
        entries[key] = value;
    }
    return entries;
}

namespace detail {

inline int to_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: '" + key + "' expects an integer, got '" + value + "'");
    }
}

inline double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: '" + key + "' expects a number, got '" + value + "'");
    }
}

inline std::uint64_t to_seed(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: '" + key + "' expects an unsigned integer, got '" +
                                 value + "'");
    }
}

}  // namespace detail

// Apply config-file entries / CLI overrides onto defaults. Later calls win,
// so parse the file first and the command line second.
inline void apply_option(RunOptions& options, const std::string& key, const std::string& value) {
    ExperimentConfig& exp = options.experiment;
    if (key == "dataset") options.dataset_path = value;
    else if (key == "out") options.out_dir = value;
    else if (key == "alpha") exp.dirichlet_alpha = detail::to_double(key, value);
    else if (key == "uncertainty") exp.uncertainty = detail::to_double(key, value);
    else if (key == "clients") exp.clients = detail::to_int(key, value);
    else if (key == "rules") exp.initial_rules = detail::to_int(key, value);
    else if (key == "erl-iters") exp.erl_iterations = detail::to_int(key, value);
    else if (key == "coop-rounds") exp.coop_rounds = detail::to_int(key, value);
    else if (key == "beta") exp.beta = detail::to_double(key, value);
    else if (key == "lr") exp.learning_rate = detail::to_double(key, value);
    else if (key == "epochs") exp.local_epochs = detail::to_int(key, value);
    else if (key == "batch") exp.batch_size = detail::to_int(key, value);
    else if (key == "folds") exp.folds = detail::to_int(key, value);
    else if (key == "repeats") options.repeats = detail::to_int(key, value);
    else if (key == "seed") exp.seed = detail::to_seed(key, value);
    else if (key == "baseline") {
        if (value == "fedavg") options.baseline = BaselineMode::fedavg;
        else if (value == "none") options.baseline = BaselineMode::none;
        else throw std::runtime_error("config: baseline must be 'fedavg' or 'none'");
    } else {
        throw std::runtime_error("config: unknown key '" + key + "'");
    }
}

inline RunOptions load_run_options(const std::string& config_path,
                                   const std::map<std::string, std::string>& overrides) {
    RunOptions options;
    for (const auto& [key, value] : parse_config_file(config_path))
        apply_option(options, key, value);
    for (const auto& [key, value] : overrides) apply_option(options, key, value);
    return options;
}

// Size-weighted FedAvg over the same architecture: every rule active for
// every client, no structural evolution. Exposed as its own entry point so
// the comparison runs share all remaining machinery.
inline ErlResult fedavg_baseline(const ExperimentConfig& config,
                                 std::vector<LabeledDataset> client_datasets,
                                 const std::vector<LabeledDataset>* test_datasets = nullptr) {
    ExperimentConfig fixed = config;
    fixed.activation_init = ActivationInit::all_on;
    fixed.evolution_enabled = false;
    fixed.spawn_enabled = false;
    return erl_run(fixed, std::move(client_datasets), test_datasets);
}

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double mean_of(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

inline double std_of(const std::vector<double>& values) {
    if (values.size() < 2) return 0.0;
    const double mean = mean_of(values);
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return std::sqrt(sq / static_cast<double>(values.size()));
}

}  // namespace detail

// Writes summary.json, rounds.csv (one row per round per client, ready for
// convergence plots) and activation.csv (final rule statuses of the last
// fold). Output is a pure function of the metrics, so re-emitting identical
// metrics produces byte-identical files.
inline void emit_metrics(const RunMetrics& metrics, const RunOptions& options,
                         const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    nlohmann::json summary;
    summary["config"] = {
        {"dataset", options.dataset_path},
        {"baseline", options.baseline == BaselineMode::fedavg ? "fedavg" : "none"},
        {"clients", options.experiment.clients},
        {"rules", options.experiment.initial_rules},
        {"erl_iters", options.experiment.erl_iterations},
        {"coop_rounds", options.experiment.coop_rounds},
        {"beta", options.experiment.beta},
        {"alpha", options.experiment.dirichlet_alpha},
        {"uncertainty", options.experiment.uncertainty},
        {"lr", options.experiment.learning_rate},
        {"epochs", options.experiment.local_epochs},
        {"batch", options.experiment.batch_size},
        {"folds", options.experiment.folds},
        {"repeats", options.repeats},
        {"seed", options.experiment.seed},
    };
    summary["mean_accuracy"] = metrics.mean_accuracy;
    summary["std_accuracy"] = metrics.std_accuracy;
    summary["mean_final_rule_count"] = metrics.mean_final_rule_count;
    summary["failed_runs"] = metrics.failed_runs;
    summary["folds"] = nlohmann::json::array();
    for (const FoldRecord& fold : metrics.folds) {
        summary["folds"].push_back({
            {"repeat", fold.repeat},
            {"fold", fold.fold},
            {"mean_accuracy", fold.mean_accuracy},
            {"client_accuracy", fold.final_client_accuracy},
            {"final_rule_count", fold.final_rule_count},
            {"rounds", fold.rounds.size()},
        });
    }
    std::ofstream json_out(out_dir + "/summary.json");
    json_out << summary.dump(2) << "\n";

    std::ofstream rounds_out(out_dir + "/rounds.csv");
    rounds_out << "repeat,fold,round,erl_iteration,client,rule_count,train_loss,test_accuracy\n";
    for (const FoldRecord& fold : metrics.folds) {
        for (const RoundRecord& record : fold.rounds) {
            for (std::size_t q = 0; q < record.train_loss.size(); ++q) {
                rounds_out << fold.repeat << ',' << fold.fold << ',' << record.round << ','
                           << record.erl_iteration << ',' << q << ',' << record.rule_count << ','
                           << detail::format_double(record.train_loss[q]) << ',';
                if (q < record.test_accuracy.size())
                    rounds_out << detail::format_double(record.test_accuracy[q]);
                rounds_out << '\n';
            }
        }
    }

    std::ofstream activation_out(out_dir + "/activation.csv");
    if (!metrics.folds.empty()) {
        const FoldRecord& last = metrics.folds.back();
        activation_out << "client";
        for (int id : last.final_rule_ids) activation_out << ",rule_" << id;
        activation_out << '\n';
        for (std::size_t q = 0; q < last.final_activation.client_count(); ++q) {
            activation_out << q;
            for (std::size_t k = 0; k < last.final_activation.rule_count(); ++k)
                activation_out << ',' << static_cast<int>(last.final_activation.at(q, k));
            activation_out << '\n';
        }
    }
}

// Full protocol: load, normalize, perturb, cross-validate; inside each fold
// partition the train and test splits with the same per-class Dirichlet
// proportions, run the federated loop and score every client on its own
// test distribution.
inline RunMetrics run_experiment(const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    options.experiment.validate();
    if (options.repeats < 1) throw std::invalid_argument("run: repeats must be >= 1");
    if (options.dataset_path.empty()) throw std::runtime_error("run: no dataset specified");

    const RawTable table = load_csv(options.dataset_path);
    const LabeledDataset normalized = normalize_mapminmax(table);

    RunMetrics metrics;
    std::vector<double> fold_means;
    for (int repeat = 0; repeat < options.repeats; ++repeat) {
        const std::uint64_t repeat_seed = derive_seed(
            options.experiment.seed, {seed_tag::repeat, static_cast<std::uint64_t>(repeat)});
        const LabeledDataset noisy =
            inject_noise(normalized, options.experiment.uncertainty, repeat_seed);
        const auto folds = kfold_split(noisy, options.experiment.folds, repeat_seed);

        for (std::size_t fold = 0; fold < folds.size(); ++fold) {
            const std::uint64_t fold_seed =
                derive_seed(repeat_seed, {seed_tag::fold, static_cast<std::uint64_t>(fold)});
            const auto proportions =
                dirichlet_proportions(normalized.class_count, options.experiment.clients,
                                      options.experiment.dirichlet_alpha, fold_seed);
            const std::vector<LabeledDataset> train_parts = partition_by_proportions(
                folds[fold].first, proportions, derive_seed(fold_seed, {seed_tag::train_split}));
            const std::vector<LabeledDataset> test_parts = partition_by_proportions(
                folds[fold].second, proportions, derive_seed(fold_seed, {seed_tag::test_split}));

            ExperimentConfig config = options.experiment;
            config.seed = fold_seed;
            ErlResult result;
            try {
                result = options.baseline == BaselineMode::fedavg
                             ? fedavg_baseline(config, train_parts, &test_parts)
                             : erl_run(config, train_parts, &test_parts);
            } catch (const std::runtime_error& e) {
                // a diverged run is dropped from the summary, everything else
                // (config/IO problems) still aborts the experiment
                if (std::string(e.what()).find("divergence") == std::string::npos) throw;
                std::fprintf(stderr,
                             "warning: repeat %d fold %zu diverged and is excluded (%s)\n",
                             repeat, fold, e.what());
                metrics.failed_runs += 1;
                continue;
            }

            FoldRecord record;
            record.repeat = repeat;
            record.fold = static_cast<int>(fold);
            record.rounds = result.rounds;
            for (std::size_t q = 0; q < test_parts.size(); ++q)
                record.final_client_accuracy.push_back(accuracy(
                    test_parts[q], result.state.bank, result.state.activation.row(q)));
            record.mean_accuracy = detail::mean_of(record.final_client_accuracy);
            record.final_rule_count = static_cast<int>(result.state.bank.size());
            record.final_activation = result.state.activation;
            for (const Rule& rule : result.state.bank.rules)
                record.final_rule_ids.push_back(rule.id);
            fold_means.push_back(record.mean_accuracy);
            metrics.folds.push_back(std::move(record));
        }
    }

    metrics.mean_accuracy = detail::mean_of(fold_means);
    metrics.std_accuracy = detail::std_of(fold_means);
    std::vector<double> final_counts;
    for (const FoldRecord& fold : metrics.folds)
        final_counts.push_back(static_cast<double>(fold.final_rule_count));
    metrics.mean_final_rule_count = detail::mean_of(final_counts);
    metrics.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    emit_metrics(metrics, options, options.out_dir);
    return metrics;
}

}  // namespace fedfnn
