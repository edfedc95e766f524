#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "fedfnn/matrix.hpp"
#include "fedfnn/rng.hpp"

namespace fedfnn {

// Lower clamp on membership spreads; the membership function divides by the
// spread and gradient steps would otherwise be free to drive it to zero.
inline constexpr double kSpreadFloor = 1e-3;

// Floor on predicted probabilities inside the loss so log() never sees zero.
inline constexpr double kProbFloor = 1e-12;

// One fuzzy rule: Gaussian antecedent per feature plus a linear consequent map.
// `consequent` is (D+1) x C with the bias row first.
struct Rule {
    int id = 0;
    Vector centers;     // length D
    Vector spreads;     // length D, every entry >= kSpreadFloor
    Matrix consequent;  // (D+1) x C

    void clamp_spreads() {
        for (double& s : spreads)
            if (s < kSpreadFloor) s = kSpreadFloor;
    }
};

// Ordered global rule set shared by the server and all clients.
struct RuleBank {
    std::vector<Rule> rules;
    int feature_dim = 0;
    int class_count = 0;

    std::size_t size() const { return rules.size(); }

    void validate() const {
        const auto d = static_cast<std::size_t>(feature_dim);
        const auto c = static_cast<std::size_t>(class_count);
        std::vector<int> seen;
        for (const Rule& r : rules) {
            if (r.centers.size() != d || r.spreads.size() != d)
                throw std::invalid_argument("rule bank: antecedent dimension mismatch");
            if (r.consequent.rows != d + 1 || r.consequent.cols != c)
                throw std::invalid_argument("rule bank: consequent shape mismatch");
            for (double s : r.spreads)
                if (s < kSpreadFloor)
                    throw std::invalid_argument("rule bank: spread below floor");
            for (int id : seen)
                if (id == r.id) throw std::invalid_argument("rule bank: duplicate rule id");
            seen.push_back(r.id);
        }
    }
};

// Fresh rule with centers in [-1,1] (the normalized feature range), unit
// spreads and small random consequents.
inline Rule make_random_rule(int id, int feature_dim, int class_count, std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed);
    std::uniform_real_distribution<double> center_dist(-1.0, 1.0);
    std::uniform_real_distribution<double> coeff_dist(-0.1, 0.1);

    Rule rule;
    rule.id = id;
    rule.centers.resize(static_cast<std::size_t>(feature_dim));
    rule.spreads.assign(static_cast<std::size_t>(feature_dim), 1.0);
    for (double& c : rule.centers) c = center_dist(rng);
    rule.consequent = Matrix(static_cast<std::size_t>(feature_dim) + 1,
                             static_cast<std::size_t>(class_count));
    for (double& v : rule.consequent.data) v = coeff_dist(rng);
    return rule;
}

// Q x K binary matrix of per-client rule activation statuses. Columns track
// the rule bank: spawning appends a column, pruning removes one in lockstep.
class ActivationMatrix {
public:
    ActivationMatrix() = default;
    ActivationMatrix(std::size_t clients, std::size_t rules, std::uint8_t value = 0)
        : clients_(clients), rules_(rules), entries_(clients * rules, value) {}

    std::size_t client_count() const { return clients_; }
    std::size_t rule_count() const { return rules_; }

    std::uint8_t at(std::size_t q, std::size_t k) const { return entries_[q * rules_ + k]; }
    void set(std::size_t q, std::size_t k, bool active) {
        entries_[q * rules_ + k] = active ? 1 : 0;
    }

    std::span<const std::uint8_t> row(std::size_t q) const {
        return {entries_.data() + q * rules_, rules_};
    }
    void set_row(std::size_t q, std::span<const std::uint8_t> values) {
        if (values.size() != rules_)
            throw std::invalid_argument("activation matrix: row length mismatch");
        std::copy(values.begin(), values.end(), entries_.begin() + static_cast<long>(q * rules_));
    }

    std::vector<std::uint8_t> column(std::size_t k) const {
        std::vector<std::uint8_t> col(clients_);
        for (std::size_t q = 0; q < clients_; ++q) col[q] = at(q, k);
        return col;
    }

    std::size_t active_in_row(std::size_t q) const {
        std::size_t n = 0;
        for (std::size_t k = 0; k < rules_; ++k) n += at(q, k);
        return n;
    }
    std::size_t active_in_column(std::size_t k) const {
        std::size_t n = 0;
        for (std::size_t q = 0; q < clients_; ++q) n += at(q, k);
        return n;
    }

    // New all-zero column except a single 1 for the spawning client.
    void append_column(std::size_t active_client) {
        std::vector<std::uint8_t> next((rules_ + 1) * clients_, 0);
        for (std::size_t q = 0; q < clients_; ++q) {
            for (std::size_t k = 0; k < rules_; ++k)
                next[q * (rules_ + 1) + k] = at(q, k);
        }
        next[active_client * (rules_ + 1) + rules_] = 1;
        rules_ += 1;
        entries_ = std::move(next);
    }

    void remove_column(std::size_t k) {
        std::vector<std::uint8_t> next((rules_ - 1) * clients_, 0);
        for (std::size_t q = 0; q < clients_; ++q) {
            std::size_t out = 0;
            for (std::size_t j = 0; j < rules_; ++j) {
                if (j == k) continue;
                next[q * (rules_ - 1) + out++] = at(q, j);
            }
        }
        rules_ -= 1;
        entries_ = std::move(next);
    }

    friend bool operator==(const ActivationMatrix& a, const ActivationMatrix& b) {
        return a.clients_ == b.clients_ && a.rules_ == b.rules_ && a.entries_ == b.entries_;
    }

private:
    std::size_t clients_ = 0;
    std::size_t rules_ = 0;
    std::vector<std::uint8_t> entries_;
};

}  // namespace fedfnn
