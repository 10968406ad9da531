#include "helpers.hpp"

#include "t2l/analysis.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

using namespace t2l;
using namespace t2l::testing;

TEST_CASE("acf") {
    const auto x = noise(2000, 1);
    const auto r = analysis::acf(std::span<const float>(x), 10);
    REQUIRE(r.size() == 11);
    CHECK(r[0] == 1.0);
    for (int l = 1; l <= 10; ++l) {
        CHECK(std::abs(r[static_cast<std::size_t>(l)]) < 0.07);
    }
    const auto s = sine(2000, 8.0);
    CHECK(analysis::acf(std::span<const float>(s), 10)[8] > 0.99);

    // Hand oracle: x = [1, 2, 3], mean 2, r1 = ((-1)(0) + (0)(1)) / 2 = 0, r2 = (-1)(1) / 2.
    const std::vector<double> tiny{1.0, 2.0, 3.0};
    const auto rt = analysis::acf(std::span<const double>(tiny), 2);
    CHECK(rt[1] == 0.0);
    CHECK(rt[2] == -0.5);

    CHECK_THROWS_AS(analysis::acf(std::vector<double>(20, 4.0), 3), UndefinedMetric);
    CHECK_THROWS_AS(analysis::acf(std::vector<double>{1.0, 2.0}, 3), InvalidArgument);
}

TEST_CASE("embedding_acf_correlation") {
    std::vector<std::vector<float>> series;
    for (int i = 0; i < 40; ++i) {
        auto x = noise(300, static_cast<std::uint64_t>(i));
        const auto s = sine(300, 3.0 + i % 7);
        for (std::size_t t = 0; t < x.size(); ++t) {
            x[t] = 0.4F * x[t] + s[t] * static_cast<float>(i % 5);
        }
        series.push_back(x);
    }
    Eigen::MatrixXd emb(40, 4);
    for (int i = 0; i < 40; ++i) {
        const auto r = analysis::acf(std::span<const float>(series[static_cast<std::size_t>(i)]), 5);
        emb(i, 0) = r[3];                      // identity feature for lag 3
        emb(i, 1) = -r[1];                     // anti-monotone feature for lag 1
        emb(i, 2) = 7.0;                       // constant column
        emb(i, 3) = static_cast<double>((i * 17) % 40);  // unrelated
    }
    const auto rep = analysis::embedding_acf_correlation(series, emb, 5, 0.3);
    CHECK(rep.matrix.rows() == 4);
    CHECK(rep.matrix.cols() == 5);
    CHECK(rep.matrix(0, 2) == doctest::Approx(1.0));
    CHECK(rep.max_per_dim[0] == doctest::Approx(1.0));
    CHECK(rep.max_per_dim[1] == doctest::Approx(-1.0));
    CHECK(rep.skipped_dims == std::vector<int>{2});
    CHECK_FALSE(rep.warnings.empty());
    CHECK((rep.matrix.array().abs() <= 1.0).all());
    CHECK(rep.count_above_threshold >= 2);

    // Order invariance.
    std::vector<std::size_t> order(40);
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    std::vector<std::vector<float>> s2;
    Eigen::MatrixXd e2(40, 4);
    for (std::size_t k = 0; k < 40; ++k) {
        s2.push_back(series[order[k]]);
        e2.row(static_cast<Eigen::Index>(k)) = emb.row(static_cast<Eigen::Index>(order[k]));
    }
    const auto rep2 = analysis::embedding_acf_correlation(s2, e2, 5, 0.3);
    CHECK((rep2.matrix - rep.matrix).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(rep2.count_above_threshold == rep.count_above_threshold);
}

TEST_CASE("bench_latency excludes warmup and reports sane statistics") {
    std::map<std::size_t, int> calls;
    const analysis::Pipeline pipeline = [&](std::span<const std::vector<float>> batch) {
        ++calls[batch.size()];
        volatile double acc = 0.0;
        for (const auto& s : batch) {
            for (float v : s) {
                acc = acc + v;
            }
        }
    };
    const std::vector<int> lengths{512, 4096};
    const auto rep = analysis::bench_latency(pipeline, lengths, 7, 3, 4);
    REQUIRE(rep.rows.size() == 2);
    CHECK(calls[1] == 2 * (3 + 7));
    CHECK(calls[4] == 2 * 7);
    for (const auto& r : rep.rows) {
        CHECK(r.latency_ms_mean > 0.0);
        CHECK(r.latency_ms_std >= 0.0);
        CHECK(r.throughput_mean > 0.0);
        CHECK(r.repeats == 7);
        CHECK(r.warmup == 3);
        CHECK(r.batch == 4);
    }
    CHECK(rep.rows[0].length == 512);
    CHECK_THROWS_AS(analysis::bench_latency(pipeline, lengths, 0, 3, 4), InvalidArgument);
    CHECK(analysis::bench_series(100, 3) == analysis::bench_series(100, 3));
}
