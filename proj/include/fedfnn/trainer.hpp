#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedfnn/dataset.hpp"
#include "fedfnn/fnn.hpp"
#include "fedfnn/gradient.hpp"
#include "fedfnn/rng.hpp"
#include "fedfnn/rule.hpp"

namespace fedfnn {

struct TrainConfig {
    int epochs = 1;
    double learning_rate = 0.05;
    int batch_size = 64;
    std::uint64_t seed = 0;
};

struct TrainResult {
    RuleBank bank;
    double final_loss = 0.0;
};

// Seeded permutation of {0..n-1} chunked into batches; the last batch may be
// short. Every index appears exactly once.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size,
                                                           std::uint64_t epoch_seed) {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng = make_rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    const auto b = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < n; start += b) {
        const std::size_t stop = std::min(n, start + b);
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(stop));
    }
    return batches;
}

// Local client training: `epochs` passes of shuffled mini-batch SGD over the
// client's activated rules. Batch gradients are means, so the learning rate
// is batch-size invariant to first order. Returns a private updated copy of
// the bank; masked rules come back bit-identical to the snapshot.
inline TrainResult local_train(const LabeledDataset& data, const RuleBank& snapshot,
                               std::span<const std::uint8_t> active, const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("empty dataset");
    if (active.size() != snapshot.size())
        throw std::invalid_argument("local train: mask length mismatch");
    if (std::find(active.begin(), active.end(), std::uint8_t{1}) == active.end())
        throw std::runtime_error("no active rules");
    if (cfg.epochs > 0 && !(cfg.learning_rate >= 0.0))
        throw std::invalid_argument("local train: invalid learning rate");

    RuleBank bank = snapshot;
    GradientSet grads(bank);
    GradientScratch ws;
    Vector target(static_cast<std::size_t>(bank.class_count), 0.0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::uint64_t epoch_seed =
            derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)});
        for (const auto& batch : batch_indices(data.size(), cfg.batch_size, epoch_seed)) {
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t i : batch) {
                target[static_cast<std::size_t>(data.labels[i])] = 1.0;
                batch_loss +=
                    detail::accumulate_gradient(data.sample(i), target, bank, active, ws, grads);
                target[static_cast<std::size_t>(data.labels[i])] = 0.0;
            }
            if (!std::isfinite(batch_loss)) throw std::runtime_error("divergence");
            grads.scale(1.0 / static_cast<double>(batch.size()));

            bool finite = true;
            for (std::size_t k = 0; k < bank.size(); ++k) {
                if (!active[k]) continue;
                Rule& rule = bank.rules[k];
                const RuleGradient& g = grads.rules[k];
                for (std::size_t j = 0; j < rule.centers.size(); ++j) {
                    rule.centers[j] -= cfg.learning_rate * g.centers[j];
                    rule.spreads[j] -= cfg.learning_rate * g.spreads[j];
                    finite = finite && std::isfinite(rule.centers[j]) &&
                             std::isfinite(rule.spreads[j]);
                }
                for (std::size_t i = 0; i < rule.consequent.data.size(); ++i) {
                    rule.consequent.data[i] -= cfg.learning_rate * g.consequent.data[i];
                    finite = finite && std::isfinite(rule.consequent.data[i]);
                }
                rule.clamp_spreads();
            }
            if (!finite) throw std::runtime_error("divergence");
        }
    }

    const double final_loss = dataset_loss(data, bank, active);
    if (!std::isfinite(final_loss)) throw std::runtime_error("divergence");
    return {std::move(bank), final_loss};
}

}  // namespace fedfnn
