#include "t2l/analysis.hpp"

#include "t2l/metrics.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace t2l::analysis {

std::vector<double> acf(std::span<const double> series, int n_lags) {
    if (n_lags < 0) {
        throw InvalidArgument("acf: n_lags must be >= 0");
    }
    const auto n = series.size();
    if (n <= static_cast<std::size_t>(n_lags)) {
        throw InvalidArgument("acf: series length " + std::to_string(n) + " must exceed n_lags " +
                              std::to_string(n_lags));
    }
    const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
    std::vector<double> c(n);
    double denom = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        c[t] = series[t] - mean;
        denom += c[t] * c[t];
    }
    if (denom <= 0.0) {
        throw UndefinedMetric("acf: constant series");
    }
    std::vector<double> r(static_cast<std::size_t>(n_lags) + 1);
    r[0] = 1.0;
    for (int lag = 1; lag <= n_lags; ++lag) {
        double s = 0.0;
        for (std::size_t t = 0; t + static_cast<std::size_t>(lag) < n; ++t) {
            s += c[t] * c[t + static_cast<std::size_t>(lag)];
        }
        r[static_cast<std::size_t>(lag)] = s / denom;
    }
    return r;
}

std::vector<double> acf(std::span<const float> series, int n_lags) {
    const std::vector<double> d(series.begin(), series.end());
    return acf(std::span<const double>(d), n_lags);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ShapeError("spearman: inputs differ in length");
    }
    if (x.size() < 3) {
        throw InvalidArgument("spearman: need at least 3 observations");
    }
    const auto rx = metrics::midranks(x);
    const auto ry = metrics::midranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedMetric("spearman: zero rank variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

AcfCorrelationReport embedding_acf_correlation(const std::vector<std::vector<float>>& series,
                                               const Eigen::MatrixXd& embeddings, int n_lags, double threshold) {
    const auto n = series.size();
    if (n < 3) {
        throw InvalidArgument("embedding_acf_correlation: need at least 3 samples");
    }
    if (static_cast<std::size_t>(embeddings.rows()) != n) {
        throw ShapeError("embedding_acf_correlation: one embedding row per series required");
    }
    if (n_lags < 1) {
        throw InvalidArgument("embedding_acf_correlation: n_lags must be >= 1");
    }
    const auto dims = static_cast<int>(embeddings.cols());

    Eigen::MatrixXd acfs(static_cast<Eigen::Index>(n), n_lags);
    parallel_for(n, [&](std::size_t i) {
        const auto r = acf(std::span<const float>(series[i]), n_lags);
        for (int l = 1; l <= n_lags; ++l) {
            acfs(static_cast<Eigen::Index>(i), l - 1) = r[static_cast<std::size_t>(l)];
        }
    });

    AcfCorrelationReport report;
    report.threshold = threshold;
    report.matrix = Eigen::MatrixXd::Zero(dims, n_lags);
    report.max_per_dim.assign(static_cast<std::size_t>(dims), 0.0);
    std::vector<std::uint8_t> degenerate(static_cast<std::size_t>(dims), 0);
    std::vector<std::vector<double>> lag_cols(static_cast<std::size_t>(n_lags));
    for (int l = 0; l < n_lags; ++l) {
        const Eigen::VectorXd col = acfs.col(l);
        lag_cols[static_cast<std::size_t>(l)].assign(col.data(), col.data() + col.size());
    }

    parallel_for(static_cast<std::size_t>(dims), [&](std::size_t j) {
        const Eigen::VectorXd col = embeddings.col(static_cast<Eigen::Index>(j));
        const std::span<const double> e(col.data(), static_cast<std::size_t>(col.size()));
        if ((col.array() == col(0)).all()) {
            degenerate[j] = 1;
            return;
        }
        double best = 0.0;
        for (int l = 0; l < n_lags; ++l) {
            double rho = 0.0;
            try {
                rho = spearman(lag_cols[static_cast<std::size_t>(l)], e);
            } catch (const UndefinedMetric&) {
                rho = 0.0;  // constant ACF lag across samples
            }
            report.matrix(static_cast<Eigen::Index>(j), l) = rho;
            if (std::abs(rho) > std::abs(best)) {
                best = rho;
            }
        }
        report.max_per_dim[j] = best;
    });

    for (int j = 0; j < dims; ++j) {
        if (degenerate[static_cast<std::size_t>(j)]) {
            report.skipped_dims.push_back(j);
            report.warnings.push_back("embedding dimension " + std::to_string(j) + " is constant, skipped");
        } else if (std::abs(report.max_per_dim[static_cast<std::size_t>(j)]) > threshold) {
            ++report.count_above_threshold;
        }
    }
    return report;
}

std::vector<float> bench_series(int length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<float> x(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
        x[static_cast<std::size_t>(t)] = static_cast<float>(std::sin(2.0 * std::numbers::pi * t / 60.0) + noise(rng));
    }
    return x;
}

namespace {

struct Stats {
    double mean = 0.0, std = 0.0;
};

Stats stats_of(const std::vector<double>& v) {
    Stats s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) {
        ss += (x - s.mean) * (x - s.mean);
    }
    s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return s;
}

}  // namespace

BenchReport bench_latency(const Pipeline& pipeline, std::span<const int> lengths, int repeats, int warmup, int batch) {
    if (repeats < 1 || warmup < 0 || batch < 1) {
        throw InvalidArgument("bench: repeats >= 1, warmup >= 0 and batch >= 1 required");
    }
    using Clock = std::chrono::steady_clock;
    const double tick_ms = 1e3 * static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);

    BenchReport report;
    for (int length : lengths) {
        if (length < 1) {
            throw InvalidArgument("bench: lengths must be >= 1");
        }
        std::vector<std::vector<float>> inputs;
        for (int b = 0; b < batch; ++b) {
            inputs.push_back(bench_series(length, derive_seed(0xBE4C4ULL, static_cast<std::uint64_t>(length),
                                                              static_cast<std::uint64_t>(b))));
        }
        const std::span<const std::vector<float>> single(inputs.data(), 1);
        const std::span<const std::vector<float>> full(inputs);

        for (int i = 0; i < warmup; ++i) {
            pipeline(single);
        }
        std::vector<double> latency, throughput;
        latency.reserve(static_cast<std::size_t>(repeats));
        for (int i = 0; i < repeats; ++i) {
            const auto t0 = Clock::now();
            pipeline(single);
            latency.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
        }
        for (int i = 0; i < repeats; ++i) {
            const auto t0 = Clock::now();
            pipeline(full);
            const double s = std::chrono::duration<double>(Clock::now() - t0).count();
            throughput.push_back(static_cast<double>(batch) / s);
        }
        const auto lat = stats_of(latency);
        const auto thr = stats_of(throughput);
        if (tick_ms > 0.01 * lat.mean) {
            report.warnings.push_back("length " + std::to_string(length) +
                                      ": timer resolution is coarser than 1% of the measured latency");
        }
        report.rows.push_back({length, lat.mean, lat.std, thr.mean, thr.std, repeats, warmup, batch});
    }
    return report;
}

}  // namespace t2l::analysis
