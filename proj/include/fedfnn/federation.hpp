#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedfnn/dataset.hpp"
#include "fedfnn/fnn.hpp"
#include "fedfnn/rng.hpp"
#include "fedfnn/rule.hpp"
#include "fedfnn/trainer.hpp"

namespace fedfnn {

enum class ActivationInit { random, all_on };

// Every knob of one federated run.
struct ExperimentConfig {
    int clients = 5;
    int initial_rules = 15;
    int local_epochs = 2;
    double learning_rate = 0.05;
    int batch_size = 64;
    int coop_rounds = 10;      // rounds per evolutionary iteration
    int erl_iterations = 15;   // evolutionary iterations
    double beta = 0.7;         // activation threshold scale
    double dirichlet_alpha = 0.5;
    double uncertainty = 0.1;  // fraction of samples perturbed with noise
    std::uint64_t seed = 1;
    int folds = 5;

    // Structural switches; the FedAvg baseline fixes every activation to 1
    // and disables evolution entirely.
    ActivationInit activation_init = ActivationInit::random;
    bool evolution_enabled = true;
    bool spawn_enabled = true;

    void validate() const {
        if (clients < 1) throw std::invalid_argument("config: clients must be >= 1");
        if (initial_rules < 1) throw std::invalid_argument("config: rules must be >= 1");
        if (coop_rounds < 1) throw std::invalid_argument("config: coop rounds must be >= 1");
        if (erl_iterations < 0) throw std::invalid_argument("config: erl iterations must be >= 0");
        if (!(beta >= 0.0)) throw std::invalid_argument("config: beta must be >= 0");
        if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("config: alpha must be > 0");
        if (uncertainty < 0.0 || uncertainty > 1.0)
            throw std::invalid_argument("config: uncertainty must be in [0,1]");
        if (local_epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("config: batch size must be >= 1");
    }
};

struct ClientState {
    int id = 0;
    LabeledDataset data;
    std::vector<double> loss_history;  // one entry per cooperation round
};

struct ServerState {
    RuleBank bank;
    ActivationMatrix activation;
    int round = 0;  // completed cooperation rounds
    std::vector<ClientState> clients;
    ExperimentConfig config;
    int next_rule_id = 0;
};

// One cooperation round as seen from outside: losses reported by the clients
// and, when a test split is attached, per-client accuracy on it.
struct RoundRecord {
    int round = 0;
    int erl_iteration = 0;
    int rule_count = 0;
    std::vector<double> train_loss;
    std::vector<double> test_accuracy;  // empty when no test data supplied
};

// Size- and activation-weighted mean of the locally trained copies of rule k.
// Clients with the rule masked contribute nothing; if nobody activates it the
// previous global rule is carried forward unchanged.
inline Rule aggregate_rule(const Rule& previous, const std::vector<RuleBank>& local_banks,
                           std::size_t k, std::span<const std::uint8_t> activation_col,
                           std::span<const std::size_t> sizes) {
    if (local_banks.size() != activation_col.size() || local_banks.size() != sizes.size())
        throw std::invalid_argument("aggregate: per-client arrays disagree");

    double total_weight = 0.0;
    for (std::size_t q = 0; q < local_banks.size(); ++q)
        if (activation_col[q]) total_weight += static_cast<double>(sizes[q]);
    if (total_weight == 0.0) return previous;

    Rule merged = previous;
    std::fill(merged.centers.begin(), merged.centers.end(), 0.0);
    std::fill(merged.spreads.begin(), merged.spreads.end(), 0.0);
    merged.consequent.fill(0.0);
    for (std::size_t q = 0; q < local_banks.size(); ++q) {
        if (!activation_col[q]) continue;
        const double w = static_cast<double>(sizes[q]) / total_weight;
        const Rule& local = local_banks[q].rules[k];
        for (std::size_t j = 0; j < merged.centers.size(); ++j) {
            merged.centers[j] += w * local.centers[j];
            merged.spreads[j] += w * local.spreads[j];
        }
        for (std::size_t i = 0; i < merged.consequent.data.size(); ++i)
            merged.consequent.data[i] += w * local.consequent.data[i];
    }
    return merged;
}

// One federated round: broadcast the bank, train every client on its
// activated rules, record the reported losses, then rebuild each global rule
// from the returned local copies.
inline void cooperation_round(ServerState& state) {
    const std::size_t clients = state.clients.size();
    const int round = state.round + 1;

    std::vector<RuleBank> local_banks(clients);
    std::vector<std::size_t> sizes(clients);
    for (std::size_t q = 0; q < clients; ++q) {
        TrainConfig cfg;
        cfg.epochs = state.config.local_epochs;
        cfg.learning_rate = state.config.learning_rate;
        cfg.batch_size = state.config.batch_size;
        cfg.seed = derive_seed(state.config.seed,
                               {seed_tag::local_train, static_cast<std::uint64_t>(q),
                                static_cast<std::uint64_t>(round)});
        try {
            TrainResult result =
                local_train(state.clients[q].data, state.bank, state.activation.row(q), cfg);
            local_banks[q] = std::move(result.bank);
            state.clients[q].loss_history.push_back(result.final_loss);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("round " + std::to_string(round) + ", client " +
                                     std::to_string(state.clients[q].id) + ": " + e.what());
        }
        sizes[q] = state.clients[q].data.size();
    }

    for (std::size_t k = 0; k < state.bank.size(); ++k) {
        state.bank.rules[k] = aggregate_rule(state.bank.rules[k], local_banks, k,
                                             state.activation.column(k), sizes);
    }
    state.round = round;
}

// Mean firing strength of every rule over the client's samples. Masked rules
// fire with exactly zero, so their contribution factor is zero as well.
inline Vector contribution_factors(const LabeledDataset& data, const RuleBank& bank,
                                   std::span<const std::uint8_t> active) {
    if (data.empty()) throw std::invalid_argument("empty dataset");
    Vector mean(bank.size(), 0.0);
    ForwardTrace trace;
    for (std::size_t i = 0; i < data.size(); ++i) {
        forward(data.sample(i), bank, active, trace);
        for (std::size_t k = 0; k < bank.size(); ++k) mean[k] += trace.firing[k];
    }
    for (double& v : mean) v /= static_cast<double>(data.size());
    return mean;
}

// beta * (mean contribution of the client's active rules).
inline double activation_threshold(std::span<const double> contribution,
                                   std::span<const std::uint8_t> active, double beta) {
    double active_sum = 0.0;
    std::size_t active_count = 0;
    for (std::size_t k = 0; k < contribution.size(); ++k) {
        if (!active[k]) continue;
        active_sum += contribution[k];
        active_count += 1;
    }
    if (active_count == 0) throw std::runtime_error("no active rules");
    return beta * active_sum / static_cast<double>(active_count);
}

// Keep a rule iff its contribution strictly exceeds the threshold.
inline std::vector<std::uint8_t> update_statuses(std::span<const double> contribution,
                                                 double threshold) {
    std::vector<std::uint8_t> statuses(contribution.size(), 0);
    for (std::size_t k = 0; k < contribution.size(); ++k)
        statuses[k] = contribution[k] > threshold ? 1 : 0;
    return statuses;
}

// Mean loss increment over the trailing `window` rounds; positive means the
// loss trend is rising.
inline double mean_loss_increment(std::span<const double> loss_history, int window) {
    const auto w = static_cast<std::size_t>(window);
    const std::size_t n = loss_history.size();
    double sum = 0.0;
    for (std::size_t l = 1; l <= w; ++l) sum += loss_history[n - l] - loss_history[n - l - 1];
    return sum / static_cast<double>(window);
}

// Self-evaluation: true iff the trailing loss trend is rising. Histories too
// short to cover the window report false, so spawning cannot trigger early.
inline bool stagnation_check(std::span<const double> loss_history, int window) {
    if (window < 1) throw std::invalid_argument("stagnation: window must be >= 1");
    if (loss_history.size() < static_cast<std::size_t>(window) + 1) return false;
    return mean_loss_increment(loss_history, window) > 0.0;
}

// Peer evaluation: true iff this client's loss sits strictly above the mean.
inline bool underperformance_check(double client_loss, std::span<const double> all_losses) {
    if (all_losses.empty()) throw std::invalid_argument("underperformance: no losses");
    const double mean = std::accumulate(all_losses.begin(), all_losses.end(), 0.0) /
                        static_cast<double>(all_losses.size());
    return client_loss - mean > 0.0;
}

// Append a freshly initialized rule activated only for the spawning client.
inline void spawn_rule(ServerState& state, std::size_t client) {
    const std::uint64_t seed =
        derive_seed(state.config.seed, {seed_tag::spawn, static_cast<std::uint64_t>(state.round),
                                        static_cast<std::uint64_t>(client)});
    state.bank.rules.push_back(
        make_random_rule(state.next_rule_id++, state.bank.feature_dim, state.bank.class_count,
                         seed));
    state.activation.append_column(client);
}

// Drop every rule no client activates; survivors keep their relative order.
inline void prune_rules(ServerState& state) {
    std::size_t k = 0;
    while (k < state.bank.size()) {
        if (state.activation.active_in_column(k) == 0) {
            if (state.bank.size() == 1) throw std::runtime_error("empty rule bank");
            state.bank.rules.erase(state.bank.rules.begin() + static_cast<long>(k));
            state.activation.remove_column(k);
        } else {
            ++k;
        }
    }
}

// Structural update after a block of cooperation rounds: refresh every
// client's activation row from its contribution factors, spawn a private rule
// for clients that are both stagnating and underperforming (or ended up with
// no active rules), then prune rules nobody activates.
inline void evolution_stage(ServerState& state) {
    const std::size_t clients = state.clients.size();

    for (std::size_t q = 0; q < clients; ++q) {
        const Vector contribution =
            contribution_factors(state.clients[q].data, state.bank, state.activation.row(q));
        const double threshold =
            activation_threshold(contribution, state.activation.row(q), state.config.beta);
        const std::vector<std::uint8_t> statuses = update_statuses(contribution, threshold);
        state.activation.set_row(q, statuses);
    }

    std::vector<double> latest(clients);
    for (std::size_t q = 0; q < clients; ++q) {
        if (state.clients[q].loss_history.empty())
            throw std::runtime_error("evolution stage before any cooperation round");
        latest[q] = state.clients[q].loss_history.back();
    }
    for (std::size_t q = 0; q < clients; ++q) {
        const bool starved = state.activation.active_in_row(q) == 0;
        const bool exhausted =
            stagnation_check(state.clients[q].loss_history, state.config.coop_rounds) &&
            underperformance_check(latest[q], latest);
        if (!starved && !exhausted) continue;
        if (!state.config.spawn_enabled) {
            if (starved) throw std::runtime_error("no active rules");
            continue;
        }
        spawn_rule(state, q);
    }

    prune_rules(state);
}

// Fresh server: initial_rules random rules plus a random (or all-on)
// activation matrix with at least one active rule per client.
inline ServerState init_server_state(const ExperimentConfig& config,
                                     std::vector<LabeledDataset> client_datasets) {
    config.validate();
    if (client_datasets.size() != static_cast<std::size_t>(config.clients))
        throw std::invalid_argument("init: dataset count != client count");

    ServerState state;
    state.config = config;

    int feature_dim = 0;
    int class_count = 0;
    for (const LabeledDataset& d : client_datasets) {
        if (d.empty()) throw std::invalid_argument("init: empty client dataset");
        d.validate();
        feature_dim = static_cast<int>(d.feature_dim());
        class_count = std::max(class_count, d.class_count);
    }

    state.bank.feature_dim = feature_dim;
    state.bank.class_count = class_count;
    for (int k = 0; k < config.initial_rules; ++k) {
        state.bank.rules.push_back(make_random_rule(
            k, feature_dim, class_count,
            derive_seed(config.seed, {seed_tag::bank_init, static_cast<std::uint64_t>(k)})));
    }
    state.next_rule_id = config.initial_rules;

    const auto clients = static_cast<std::size_t>(config.clients);
    const auto rules = static_cast<std::size_t>(config.initial_rules);
    state.activation = ActivationMatrix(clients, rules, 1);
    if (config.activation_init == ActivationInit::random) {
        std::mt19937_64 rng = make_rng(derive_seed(config.seed, {seed_tag::activation_init}));
        std::bernoulli_distribution coin(0.5);
        for (std::size_t q = 0; q < clients; ++q) {
            do {
                for (std::size_t k = 0; k < rules; ++k) state.activation.set(q, k, coin(rng));
            } while (state.activation.active_in_row(q) == 0);
        }
    }

    for (std::size_t q = 0; q < clients; ++q) {
        ClientState client;
        client.id = static_cast<int>(q);
        client.data = std::move(client_datasets[q]);
        state.clients.push_back(std::move(client));
    }
    return state;
}

inline double accuracy(const LabeledDataset& data, const RuleBank& bank,
                       std::span<const std::uint8_t> active) {
    if (data.empty()) throw std::invalid_argument("empty dataset");
    ForwardTrace trace;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        forward(data.sample(i), bank, active, trace);
        const std::size_t best =
            static_cast<std::size_t>(std::max_element(trace.probs.begin(), trace.probs.end()) -
                                     trace.probs.begin());
        if (static_cast<int>(best) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct ErlResult {
    ServerState state;
    std::vector<RoundRecord> rounds;
};

// The full outer loop: erl_iterations blocks of coop_rounds cooperation
// rounds, each block followed by one evolution stage (when enabled). Pass a
// per-client test split to get accuracy recorded after every round.
inline ErlResult erl_run(const ExperimentConfig& config,
                         std::vector<LabeledDataset> client_datasets,
                         const std::vector<LabeledDataset>* test_datasets = nullptr) {
    if (test_datasets && test_datasets->size() != client_datasets.size())
        throw std::invalid_argument("erl run: test split count != client count");

    ErlResult result;
    result.state = init_server_state(config, std::move(client_datasets));
    ServerState& state = result.state;

    for (int iteration = 1; iteration <= config.erl_iterations; ++iteration) {
        for (int r = 0; r < config.coop_rounds; ++r) {
            cooperation_round(state);

            RoundRecord record;
            record.round = state.round;
            record.erl_iteration = iteration;
            record.rule_count = static_cast<int>(state.bank.size());
            for (const ClientState& client : state.clients)
                record.train_loss.push_back(client.loss_history.back());
            if (test_datasets) {
                for (std::size_t q = 0; q < state.clients.size(); ++q)
                    record.test_accuracy.push_back(
                        accuracy((*test_datasets)[q], state.bank, state.activation.row(q)));
            }
            result.rounds.push_back(std::move(record));
        }
        if (config.evolution_enabled) evolution_stage(state);
    }
    return result;
}

}  // namespace fedfnn
