#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fedfnn/fnn.hpp"
#include "fedfnn/rule.hpp"

namespace fedfnn {

// Loss gradients for one rule, shaped exactly like the rule's parameters.
struct RuleGradient {
    Vector centers;
    Vector spreads;
    Matrix consequent;
};

// Gradients for every rule in bank order. Rules masked off by the client's
// activation row keep all-zero entries.
struct GradientSet {
    std::vector<RuleGradient> rules;

    GradientSet() = default;
    explicit GradientSet(const RuleBank& bank) {
        rules.resize(bank.size());
        const auto d = static_cast<std::size_t>(bank.feature_dim);
        const auto c = static_cast<std::size_t>(bank.class_count);
        for (RuleGradient& g : rules) {
            g.centers.assign(d, 0.0);
            g.spreads.assign(d, 0.0);
            g.consequent = Matrix(d + 1, c);
        }
    }

    void zero() {
        for (RuleGradient& g : rules) {
            std::fill(g.centers.begin(), g.centers.end(), 0.0);
            std::fill(g.spreads.begin(), g.spreads.end(), 0.0);
            g.consequent.fill(0.0);
        }
    }

    void scale(double factor) {
        for (RuleGradient& g : rules) {
            for (double& v : g.centers) v *= factor;
            for (double& v : g.spreads) v *= factor;
            for (double& v : g.consequent.data) v *= factor;
        }
    }
};

// Reusable buffers for gradient accumulation across the samples of a batch.
struct GradientScratch {
    ForwardTrace trace;
    Vector residual;     // probs - y
    Vector sensitivity;  // u_k = residual . g_k per rule
};

namespace detail {

// Adds the exact per-sample gradient into `grads` and returns the sample loss.
// Chain rule through the softmax head, the normalized firing strengths and the
// Gaussian memberships; only rules with active[k] = 1 receive contributions.
inline double accumulate_gradient(std::span<const double> x, std::span<const double> target_onehot,
                                  const RuleBank& bank, std::span<const std::uint8_t> active,
                                  GradientScratch& ws, GradientSet& grads) {
    ForwardTrace& trace = ws.trace;
    forward(x, bank, active, trace);
    const std::size_t rules = bank.size();
    const std::size_t classes = static_cast<std::size_t>(bank.class_count);

    // residual = probs - y, which is d loss / d logits for softmax + CE
    ws.residual.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) ws.residual[c] = trace.probs[c] - target_onehot[c];

    // Consequent gradients and firing sensitivities u_k = residual . g_k.
    ws.sensitivity.assign(rules, 0.0);
    double weighted_sensitivity = 0.0;  // sum_k h_k u_k
    for (std::size_t k = 0; k < rules; ++k) {
        if (!active[k]) continue;
        const double h = trace.firing[k];
        Matrix& dtheta = grads.rules[k].consequent;
        double u = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double r = ws.residual[c];
            u += r * trace.consequent(k, c);
            dtheta(0, c) += h * r;
            for (std::size_t j = 0; j < x.size(); ++j) dtheta(j + 1, c) += h * x[j] * r;
        }
        ws.sensitivity[k] = u;
        weighted_sensitivity += h * u;
    }

    // Antecedent gradients through the softmax-normalized norms.
    for (std::size_t k = 0; k < rules; ++k) {
        if (!active[k]) continue;
        const double dloss_dnorm =
            trace.firing[k] * (ws.sensitivity[k] - weighted_sensitivity);
        if (dloss_dnorm == 0.0 || trace.norms[k] == 0.0) continue;
        const Rule& rule = bank.rules[k];
        RuleGradient& g = grads.rules[k];
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double phi = trace.membership(k, j);
            const double z = (x[j] - rule.centers[j]) / rule.spreads[j];
            const double common =
                dloss_dnorm * (phi / trace.norms[k]) * phi * 2.0 / rule.spreads[j];
            g.centers[j] += common * z;
            g.spreads[j] += common * z * z;
        }
    }

    return cross_entropy_loss(target_onehot, trace.probs);
}

}  // namespace detail

// Exact gradient of cross_entropy_loss(y, predict(x)) for every parameter.
inline std::pair<double, GradientSet> backward(std::span<const double> x,
                                               std::span<const double> target_onehot,
                                               const RuleBank& bank,
                                               std::span<const std::uint8_t> active) {
    GradientSet grads(bank);
    GradientScratch ws;
    const double loss = detail::accumulate_gradient(x, target_onehot, bank, active, ws, grads);
    return {loss, std::move(grads)};
}

namespace detail {

// Extended-precision replica of the forward pass plus loss, written directly
// against the parameter arrays. The finite-difference oracle runs on this
// instead of the double-precision path: with ~1e-5 steps the central
// difference cancels all but ~1e-11 of a double-precision loss, which would
// swamp the comparison on parameters whose true gradient is tiny.
struct LongRuleParams {
    std::vector<long double> centers;
    std::vector<long double> spreads;
    std::vector<long double> consequent;  // row-major (D+1) x C
};

inline long double loss_long(std::span<const double> x, std::span<const double> target_onehot,
                             const std::vector<LongRuleParams>& rules,
                             std::span<const std::uint8_t> active, std::size_t classes) {
    const std::size_t dim = x.size();
    std::vector<long double> norms(rules.size(), 0.0L);
    for (std::size_t k = 0; k < rules.size(); ++k) {
        if (!active[k]) continue;
        long double sq = 0.0L;
        for (std::size_t j = 0; j < dim; ++j) {
            const long double z =
                (static_cast<long double>(x[j]) - rules[k].centers[j]) / rules[k].spreads[j];
            const long double phi = std::exp(-z * z);
            sq += phi * phi;
        }
        norms[k] = std::sqrt(sq);
    }

    long double shift = -1.0L;
    for (std::size_t k = 0; k < rules.size(); ++k)
        if (active[k] && norms[k] > shift) shift = norms[k];
    long double total = 0.0L;
    std::vector<long double> firing(rules.size(), 0.0L);
    for (std::size_t k = 0; k < rules.size(); ++k) {
        if (!active[k]) continue;
        firing[k] = std::exp(norms[k] - shift);
        total += firing[k];
    }

    std::vector<long double> logits(classes, 0.0L);
    for (std::size_t k = 0; k < rules.size(); ++k) {
        if (!active[k]) continue;
        const long double h = firing[k] / total;
        for (std::size_t c = 0; c < classes; ++c) {
            long double g = rules[k].consequent[c];
            for (std::size_t j = 0; j < dim; ++j)
                g += static_cast<long double>(x[j]) * rules[k].consequent[(j + 1) * classes + c];
            logits[c] += h * g;
        }
    }

    long double logit_shift = logits[0];
    for (long double v : logits) logit_shift = std::max(logit_shift, v);
    long double denom = 0.0L;
    for (long double v : logits) denom += std::exp(v - logit_shift);

    long double loss = 0.0L;
    for (std::size_t c = 0; c < classes; ++c) {
        if (target_onehot[c] == 0.0) continue;
        const long double p =
            std::max(std::exp(logits[c] - logit_shift) / denom,
                     static_cast<long double>(kProbFloor));
        loss -= static_cast<long double>(target_onehot[c]) * std::log(p);
    }
    return loss;
}

}  // namespace detail

// Central-difference oracle: (loss(w+step) - loss(w-step)) / (2 step) per
// scalar parameter, evaluated in extended precision. Independent of the
// analytic path; used to validate it.
inline GradientSet finite_difference_gradient(std::span<const double> x,
                                              std::span<const double> target_onehot,
                                              const RuleBank& bank,
                                              std::span<const std::uint8_t> active, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite differences: step must be positive");
    const auto classes = static_cast<std::size_t>(bank.class_count);

    std::vector<detail::LongRuleParams> probe(bank.size());
    for (std::size_t k = 0; k < bank.size(); ++k) {
        probe[k].centers.assign(bank.rules[k].centers.begin(), bank.rules[k].centers.end());
        probe[k].spreads.assign(bank.rules[k].spreads.begin(), bank.rules[k].spreads.end());
        probe[k].consequent.assign(bank.rules[k].consequent.data.begin(),
                                   bank.rules[k].consequent.data.end());
    }

    const auto delta = static_cast<long double>(step);
    auto central = [&](long double& param) {
        const long double original = param;
        param = original + delta;
        const long double up = detail::loss_long(x, target_onehot, probe, active, classes);
        param = original - delta;
        const long double down = detail::loss_long(x, target_onehot, probe, active, classes);
        param = original;
        return static_cast<double>((up - down) / (2.0L * delta));
    };

    GradientSet grads(bank);
    for (std::size_t k = 0; k < bank.size(); ++k) {
        RuleGradient& g = grads.rules[k];
        for (std::size_t j = 0; j < probe[k].centers.size(); ++j) {
            g.centers[j] = central(probe[k].centers[j]);
            g.spreads[j] = central(probe[k].spreads[j]);
        }
        for (std::size_t i = 0; i < probe[k].consequent.size(); ++i)
            g.consequent.data[i] = central(probe[k].consequent[i]);
    }
    return grads;
}

// |a-b| / max(1e-8, |a|+|b|), the agreement metric for gradient checks.
inline double gradient_relative_error(double a, double b) {
    return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

inline double max_relative_error(const GradientSet& a, const GradientSet& b) {
    double worst = 0.0;
    auto update = [&worst](double x, double y) {
        const double e = gradient_relative_error(x, y);
        if (e > worst) worst = e;
    };
    for (std::size_t k = 0; k < a.rules.size(); ++k) {
        for (std::size_t j = 0; j < a.rules[k].centers.size(); ++j) {
            update(a.rules[k].centers[j], b.rules[k].centers[j]);
            update(a.rules[k].spreads[j], b.rules[k].spreads[j]);
        }
        for (std::size_t i = 0; i < a.rules[k].consequent.data.size(); ++i)
            update(a.rules[k].consequent.data[i], b.rules[k].consequent.data[i]);
    }
    return worst;
}

}  // namespace fedfnn
