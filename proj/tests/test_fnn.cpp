#include <doctest.h>

#include <cmath>
#include <limits>

#include "fedfnn/fnn.hpp"
#include "support/synthetic.hpp"

using namespace fedfnn;

namespace {

RuleBank two_rule_bank(double c0, double c1, double spread = 1.0) {
    std::mt19937_64 rng(7);
    RuleBank bank = testsupport::random_bank(2, 1, 2, rng);
    bank.rules[0].centers[0] = c0;
    bank.rules[1].centers[0] = c1;
    bank.rules[0].spreads[0] = spread;
    bank.rules[1].spreads[0] = spread;
    return bank;
}

}  // namespace

TEST_SUITE_BEGIN("fnn");

TEST_CASE("membership value matches the Gaussian form") {
    CHECK(membership_value(0.5, 0.5, 1.0) == doctest::Approx(1.0));
    CHECK(membership_value(1.5, 0.5, 1.0) == doctest::Approx(std::exp(-1.0)));
    CHECK(membership_value(0.0, 1.0, 0.5) == doctest::Approx(std::exp(-4.0)));
    CHECK(membership_value(0.3, 0.3, 2.0) == 1.0);  // exactly 1 iff x = center
}

TEST_CASE("membership value rejects non-finite input") {
    const double inf = std::numeric_limits<double>::infinity();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(membership_value(inf, 0.0, 1.0), "non-finite input",
                         std::invalid_argument);
    CHECK_THROWS_AS(membership_value(0.0, nan, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(membership_value(0.0, 0.0, inf), std::invalid_argument);
}

TEST_CASE("single active rule fires with strength one") {
    std::mt19937_64 rng(11);
    RuleBank bank = testsupport::random_bank(1, 3, 2, rng);
    const std::vector<std::uint8_t> mask{1};
    for (int i = 0; i < 5; ++i) {
        const Vector x = testsupport::random_point(3, rng);
        const Vector h = firing_strengths(x, bank, mask);
        CHECK(h.size() == 1);
        CHECK(h[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("identical rules split the firing strength evenly") {
    std::mt19937_64 rng(13);
    RuleBank bank = testsupport::random_bank(2, 2, 2, rng);
    bank.rules[1].centers = bank.rules[0].centers;
    bank.rules[1].spreads = bank.rules[0].spreads;
    const std::vector<std::uint8_t> mask{1, 1};
    const Vector h = firing_strengths(Vector{0.2, -0.4}, bank, mask);
    CHECK(h[0] == doctest::Approx(0.5));
    CHECK(h[1] == doctest::Approx(0.5));
}

TEST_CASE("masked rules fire with exactly zero") {
    const RuleBank bank = two_rule_bank(-0.5, 0.7);
    const std::vector<std::uint8_t> mask{1, 0};
    const Vector h = firing_strengths(Vector{0.1}, bank, mask);
    CHECK(h[0] == 1.0);
    CHECK(h[1] == 0.0);
}

TEST_CASE("all rules masked is an error") {
    const RuleBank bank = two_rule_bank(-0.5, 0.7);
    const std::vector<std::uint8_t> mask{0, 0};
    CHECK_THROWS_WITH_AS(firing_strengths(Vector{0.1}, bank, mask), "no active rules",
                         std::runtime_error);
}

TEST_CASE("active firing strengths sum to one") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const int rules = 1 + static_cast<int>(rng() % 6);
        const int dim = 1 + static_cast<int>(rng() % 4);
        const RuleBank bank = testsupport::random_bank(rules, dim, 3, rng);
        const auto mask = testsupport::random_mask(bank.size(), rng);
        const Vector h = firing_strengths(testsupport::random_point(dim, rng), bank, mask);
        double total = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            CHECK(h[k] >= 0.0);
            CHECK(h[k] <= 1.0);
            if (!mask[k]) CHECK(h[k] == 0.0);
            total += h[k];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("a common shift of all norms leaves the firing unchanged") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> norm_dist(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vector norms(5);
        for (double& v : norms) v = norm_dist(rng);
        const auto mask = testsupport::random_mask(norms.size(), rng);
        Vector shifted = norms;
        for (double& v : shifted) v += 0.75;
        const Vector a = firing_from_norms(norms, mask);
        const Vector b = firing_from_norms(shifted, mask);
        for (std::size_t k = 0; k < a.size(); ++k)
            CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
    }
}

TEST_CASE("consequent output is the affine map") {
    SUBCASE("all-zero parameters") {
        const Vector out = consequent_output(Vector{0.3, -0.2}, Matrix(3, 2));
        CHECK(out[0] == 0.0);
        CHECK(out[1] == 0.0);
    }
    SUBCASE("zero input passes the bias row through") {
        Matrix theta(3, 2);
        theta(0, 0) = 1.5;
        theta(0, 1) = -0.5;
        theta(1, 0) = 9.0;  // must not matter
        const Vector out = consequent_output(Vector{0.0, 0.0}, theta);
        CHECK(out[0] == 1.5);
        CHECK(out[1] == -0.5);
    }
    SUBCASE("hand-computed 1x2 case") {
        Matrix theta(2, 2);
        theta(0, 0) = 1.0;
        theta(0, 1) = 0.0;
        theta(1, 0) = 0.5;
        theta(1, 1) = -1.0;
        const Vector out = consequent_output(Vector{2.0}, theta);
        CHECK(out[0] == doctest::Approx(2.0));
        CHECK(out[1] == doctest::Approx(-2.0));
    }
    SUBCASE("dimension mismatch throws") {
        CHECK_THROWS_AS(consequent_output(Vector{1.0, 2.0}, Matrix(2, 2)),
                        std::invalid_argument);
    }
}

TEST_CASE("predict with zero consequents is uniform") {
    std::mt19937_64 rng(23);
    RuleBank bank = testsupport::random_bank(3, 2, 4, rng);
    for (Rule& r : bank.rules) r.consequent.fill(0.0);
    const std::vector<std::uint8_t> mask{1, 1, 1};
    const Vector probs = predict(Vector{0.4, 0.1}, bank, mask);
    for (double p : probs) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("single-rule predict reduces to softmax of its consequent") {
    std::mt19937_64 rng(29);
    const RuleBank bank = testsupport::random_bank(1, 2, 3, rng);
    const Vector x{0.2, -0.6};
    Vector expected = consequent_output(x, bank.rules[0].consequent);
    softmax_in_place(expected);
    const Vector probs = predict(x, bank, std::vector<std::uint8_t>{1});
    for (std::size_t c = 0; c < probs.size(); ++c)
        CHECK(probs[c] == doctest::Approx(expected[c]).epsilon(1e-12));
}

TEST_CASE("opposite consequents on symmetric rules cancel to uniform") {
    std::mt19937_64 rng(31);
    RuleBank bank = testsupport::random_bank(2, 2, 3, rng);
    bank.rules[1].centers = bank.rules[0].centers;
    bank.rules[1].spreads = bank.rules[0].spreads;
    for (std::size_t i = 0; i < bank.rules[0].consequent.data.size(); ++i)
        bank.rules[1].consequent.data[i] = -bank.rules[0].consequent.data[i];
    const Vector x = bank.rules[0].centers;  // both rules fire equally here
    const Vector probs = predict(x, bank, std::vector<std::uint8_t>{1, 1});
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("predict emits a valid probability vector") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 1 + static_cast<int>(rng() % 5);
        const RuleBank bank = testsupport::random_bank(4, dim, 3, rng);
        const auto mask = testsupport::random_mask(bank.size(), rng);
        const Vector probs = predict(testsupport::random_point(dim, rng), bank, mask);
        double total = 0.0;
        for (double p : probs) {
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            total += p;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("cross entropy on known values") {
    CHECK(cross_entropy_loss(Vector{1, 0}, Vector{0.5, 0.5}) ==
          doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy_loss(Vector{0, 1}, Vector{0.25, 0.75}) ==
          doctest::Approx(-std::log(0.75)));
    CHECK(cross_entropy_loss(Vector{1, 0, 0}, Vector{1.0 / 3, 1.0 / 3, 1.0 / 3}) ==
          doctest::Approx(std::log(3.0)));
}

TEST_CASE("cross entropy clamps instead of producing NaN") {
    const double loss = cross_entropy_loss(Vector{1, 0}, Vector{0.0, 1.0});
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(kProbFloor)));
}

TEST_CASE("cross entropy is nonnegative and vanishes only at certainty") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> dist(0.01, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Vector probs{dist(rng), dist(rng), dist(rng)};
        const double total = probs[0] + probs[1] + probs[2];
        for (double& p : probs) p /= total;
        const double loss = cross_entropy_loss(Vector{0, 0, 1}, probs);
        CHECK(loss >= 0.0);
        if (probs[2] < 0.999) CHECK(loss > 1e-4);
    }
}

TEST_CASE("dataset loss is the mean per-sample loss") {
    std::mt19937_64 rng(43);
    const RuleBank bank = testsupport::random_bank(3, 2, 3, rng);
    const std::vector<std::uint8_t> mask{1, 0, 1};

    LabeledDataset one;
    one.class_count = 3;
    one.features = Matrix(1, 2);
    one.features(0, 0) = 0.3;
    one.features(0, 1) = -0.8;
    one.labels = {2};

    const Vector probs = predict(one.sample(0), bank, mask);
    CHECK(dataset_loss(one, bank, mask) ==
          doctest::Approx(cross_entropy_loss(Vector{0, 0, 1}, probs)).epsilon(1e-12));

    LabeledDataset doubled;
    doubled.class_count = 3;
    doubled.features = Matrix(2, 2);
    for (int rep = 0; rep < 2; ++rep)
        for (std::size_t j = 0; j < 2; ++j) doubled.features(rep, j) = one.features(0, j);
    doubled.labels = {2, 2};
    CHECK(dataset_loss(doubled, bank, mask) ==
          doctest::Approx(dataset_loss(one, bank, mask)).epsilon(1e-12));

    LabeledDataset empty;
    empty.class_count = 3;
    CHECK_THROWS_WITH_AS(dataset_loss(empty, bank, mask), "empty dataset",
                         std::invalid_argument);
}

TEST_CASE("deleting a masked rule leaves predictions bit-identical") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        const int dim = 1 + static_cast<int>(rng() % 4);
        RuleBank bank = testsupport::random_bank(4, dim, 3, rng);
        auto mask = testsupport::random_mask(bank.size(), rng);
        std::size_t dead = bank.size();
        for (std::size_t k = 0; k < mask.size(); ++k)
            if (!mask[k]) dead = k;
        if (dead == bank.size()) continue;  // all active this draw

        RuleBank shrunk = bank;
        shrunk.rules.erase(shrunk.rules.begin() + static_cast<long>(dead));
        auto shrunk_mask = mask;
        shrunk_mask.erase(shrunk_mask.begin() + static_cast<long>(dead));

        const Vector x = testsupport::random_point(dim, rng);
        const Vector full = predict(x, bank, mask);
        const Vector reduced = predict(x, shrunk, shrunk_mask);
        for (std::size_t c = 0; c < full.size(); ++c)
            CHECK(full[c] == reduced[c]);
    }
}

TEST_SUITE_END();
