#include "oracles.hpp"

#include "t2l/analysis.hpp"
#include "t2l/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace t2l;
using namespace t2l::testing;

TEST_CASE("midranks") {
    const std::vector<double> x{3.0, 1.0, 3.0, 2.0};
    CHECK(metrics::midranks(x) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
}

TEST_CASE("auroc examples") {
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
    CHECK(metrics::auroc(s, std::vector<int>{1, 0, 1, 0}) == 0.75);
    CHECK(metrics::auroc(s, std::vector<int>{1, 1, 0, 0}) == 1.0);
    CHECK(metrics::auroc(std::vector<double>(4, 0.3), std::vector<int>{1, 0, 1, 0}) == 0.5);
    CHECK_THROWS_AS(metrics::auroc(s, std::vector<int>{1, 1, 1, 1}), UndefinedMetric);
    CHECK_THROWS_AS(metrics::auroc(s, std::vector<int>{1, 0, 2, 0}), InvalidArgument);
}

TEST_CASE("auprc examples") {
    CHECK(metrics::auprc(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{1, 1, 0}) == 1.0);
    CHECK(metrics::auprc(std::vector<double>{0.2, 0.8, 0.7, 0.1}, std::vector<int>{0, 1, 1, 0}) == 1.0);
    CHECK_THROWS_AS(metrics::auprc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), UndefinedMetric);

    // Random scores converge to the prevalence.
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> scores(20000);
    std::vector<int> labels(20000);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = u(rng);
        labels[i] = u(rng) < 0.68 ? 1 : 0;
    }
    CHECK(metrics::auprc(scores, labels) == doctest::Approx(0.68).epsilon(0.03));
}

TEST_CASE("auroc is invariant under monotone transforms") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> s(50), t(50);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
        s[i] = n(rng);
        t[i] = std::exp(3.0 * s[i]) + 2.0;
        y[i] = static_cast<int>(i % 3 == 0);
    }
    CHECK(metrics::auroc(s, y) == metrics::auroc(t, y));
}

TEST_CASE("metrics agree with brute-force oracles on small instances") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<std::size_t>(2 + trial % 9);
        std::vector<double> s(n), x(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 5) / 4.0;  // coarse grid forces ties
            x[i] = static_cast<double>(rng() % 7);
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 1;
        y[1] = 0;
        CHECK(metrics::auroc(s, y) == auroc_pairs(s, y));
        CHECK(metrics::auprc(s, y) == auprc_sweep(s, y));
        if (n >= 3 && count_ranks(s) != std::vector<double>(n, count_ranks(s)[0]) &&
            count_ranks(x) != std::vector<double>(n, count_ranks(x)[0])) {
            CHECK(analysis::spearman(s, x) == spearman_ranks(s, x));
        }
    }
}

TEST_CASE("spearman examples") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(analysis::spearman(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(analysis::spearman(x, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(analysis::spearman(x, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK_THROWS_AS(analysis::spearman(x, std::vector<double>(4, 1.0)), UndefinedMetric);
    CHECK_THROWS_AS(analysis::spearman(x, std::vector<double>{1, 2, 3}), ShapeError);

    // Every permutation of length 6 against the identity.
    std::vector<double> perm{1, 2, 3, 4, 5, 6};
    const std::vector<double> id = perm;
    do {
        double d2 = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            d2 += (perm[i] - id[i]) * (perm[i] - id[i]);
        }
        CHECK(analysis::spearman(id, perm) == doctest::Approx(1.0 - 6.0 * d2 / (6.0 * 35.0)).epsilon(1e-12));
    } while (std::next_permutation(perm.begin(), perm.end()));
}
