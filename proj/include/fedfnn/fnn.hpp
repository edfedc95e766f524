#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "fedfnn/dataset.hpp"
#include "fedfnn/matrix.hpp"
#include "fedfnn/rule.hpp"

namespace fedfnn {

// Gaussian membership degree of one feature value: exp(-((x-center)/spread)^2).
inline double membership_value(double x, double center, double spread) {
    if (!std::isfinite(x) || !std::isfinite(center) || !std::isfinite(spread))
        throw std::invalid_argument("non-finite input");
    const double z = (x - center) / spread;
    return std::exp(-z * z);
}

// Euclidean norm of the rule's membership-value vector over all features.
inline double membership_norm(std::span<const double> x, const Rule& rule) {
    double sq = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double phi = membership_value(x[j], rule.centers[j], rule.spreads[j]);
        sq += phi * phi;
    }
    return std::sqrt(sq);
}

// Normalized firing strengths from precomputed membership norms: a masked
// softmax over exp(norm_k). Max-shifted, which leaves the ratios unchanged.
// Deactivated rules get exactly 0; active entries sum to 1.
inline Vector firing_from_norms(std::span<const double> norms,
                                std::span<const std::uint8_t> active) {
    if (norms.size() != active.size())
        throw std::invalid_argument("firing strengths: mask length mismatch");
    double shift = -1.0;
    for (std::size_t k = 0; k < norms.size(); ++k)
        if (active[k] && norms[k] > shift) shift = norms[k];
    if (shift < 0.0) throw std::runtime_error("no active rules");

    Vector strengths(norms.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < norms.size(); ++k) {
        if (!active[k]) continue;
        strengths[k] = std::exp(norms[k] - shift);
        total += strengths[k];
    }
    for (std::size_t k = 0; k < norms.size(); ++k)
        if (active[k]) strengths[k] /= total;
    return strengths;
}

inline Vector firing_strengths(std::span<const double> x, const RuleBank& bank,
                               std::span<const std::uint8_t> active) {
    if (active.size() != bank.size())
        throw std::invalid_argument("firing strengths: mask length mismatch");
    Vector norms(bank.size());
    for (std::size_t k = 0; k < bank.size(); ++k)
        norms[k] = membership_norm(x, bank.rules[k]);
    return firing_from_norms(norms, active);
}

// Linear consequent [1; x]^T theta. Bias row first.
inline Vector consequent_output(std::span<const double> x, const Matrix& consequent) {
    if (consequent.rows != x.size() + 1)
        throw std::invalid_argument("consequent: dimension mismatch");
    Vector out(consequent.cols);
    for (std::size_t c = 0; c < consequent.cols; ++c) {
        double v = consequent(0, c);
        for (std::size_t j = 0; j < x.size(); ++j) v += x[j] * consequent(j + 1, c);
        out[c] = v;
    }
    return out;
}

inline void softmax_in_place(Vector& v) {
    const double shift = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double& e : v) {
        e = std::exp(e - shift);
        total += e;
    }
    for (double& e : v) e /= total;
}

// Per-sample forward intermediates, reusable across samples to keep the
// training loop free of per-sample allocations.
struct ForwardTrace {
    Matrix membership;  // K x D
    Vector norms;       // K
    Vector firing;      // K, zero for masked rules
    Matrix consequent;  // K x C, rows of masked rules left untouched
    Vector logits;      // C
    Vector probs;       // C

    void resize(std::size_t rules, std::size_t features, std::size_t classes) {
        if (membership.rows != rules || membership.cols != features)
            membership = Matrix(rules, features);
        norms.resize(rules);
        firing.resize(rules);
        if (consequent.rows != rules || consequent.cols != classes)
            consequent = Matrix(rules, classes);
        logits.resize(classes);
        probs.resize(classes);
    }
};

// Full forward pass; fills `trace` and leaves the class probabilities in
// trace.probs. Only active rules contribute to the logits, so dropping a
// masked rule from the bank cannot change the result even in the last bit.
inline void forward(std::span<const double> x, const RuleBank& bank,
                    std::span<const std::uint8_t> active, ForwardTrace& trace) {
    if (x.size() != static_cast<std::size_t>(bank.feature_dim))
        throw std::invalid_argument("forward: feature dimension mismatch");
    if (active.size() != bank.size())
        throw std::invalid_argument("forward: mask length mismatch");
    const std::size_t rules = bank.size();
    const std::size_t classes = static_cast<std::size_t>(bank.class_count);
    trace.resize(rules, x.size(), classes);

    for (std::size_t k = 0; k < rules; ++k) {
        double sq = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double phi =
                membership_value(x[j], bank.rules[k].centers[j], bank.rules[k].spreads[j]);
            trace.membership(k, j) = phi;
            sq += phi * phi;
        }
        trace.norms[k] = std::sqrt(sq);
    }

    trace.firing = firing_from_norms(trace.norms, active);

    std::fill(trace.logits.begin(), trace.logits.end(), 0.0);
    for (std::size_t k = 0; k < rules; ++k) {
        if (!active[k]) continue;
        const Matrix& theta = bank.rules[k].consequent;
        for (std::size_t c = 0; c < classes; ++c) {
            double g = theta(0, c);
            for (std::size_t j = 0; j < x.size(); ++j) g += x[j] * theta(j + 1, c);
            trace.consequent(k, c) = g;
            trace.logits[c] += trace.firing[k] * g;
        }
    }

    trace.probs = trace.logits;
    softmax_in_place(trace.probs);
}

// Class probabilities for one sample under the client's activation row.
inline Vector predict(std::span<const double> x, const RuleBank& bank,
                      std::span<const std::uint8_t> active) {
    ForwardTrace trace;
    forward(x, bank, active, trace);
    return trace.probs;
}

// -sum_c y_c ln(max(p_c, floor)); the floor keeps a confidently wrong
// prediction finite instead of NaN.
inline double cross_entropy_loss(std::span<const double> target_onehot,
                                 std::span<const double> predicted) {
    if (target_onehot.size() != predicted.size())
        throw std::invalid_argument("cross entropy: length mismatch");
    double loss = 0.0;
    for (std::size_t c = 0; c < predicted.size(); ++c) {
        if (target_onehot[c] == 0.0) continue;
        loss -= target_onehot[c] * std::log(std::max(predicted[c], kProbFloor));
    }
    return loss;
}

// Mean per-sample cross-entropy over the dataset.
inline double dataset_loss(const LabeledDataset& data, const RuleBank& bank,
                           std::span<const std::uint8_t> active) {
    if (data.empty()) throw std::invalid_argument("empty dataset");
    ForwardTrace trace;
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        forward(data.sample(i), bank, active, trace);
        const auto y = static_cast<std::size_t>(data.labels[i]);
        total -= std::log(std::max(trace.probs[y], kProbFloor));
    }
    return total / static_cast<double>(data.size());
}

}  // namespace fedfnn
