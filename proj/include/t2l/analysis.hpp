#pragma once

// Embedding-vs-autocorrelation study and the latency / throughput benchmark.

#include "t2l/common.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace t2l::analysis {

// r_l = sum_t (x_t - m)(x_{t+l} - m) / sum_t (x_t - m)^2 for l = 0..n_lags.
std::vector<double> acf(std::span<const double> series, int n_lags = 10);
std::vector<double> acf(std::span<const float> series, int n_lags = 10);

// Pearson correlation of mid-ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct AcfCorrelationReport {
    Eigen::MatrixXd matrix;         // embed_dim x n_lags; column l-1 holds lag l
    std::vector<double> max_per_dim;  // signed value with the largest |rho|
    int count_above_threshold = 0;
    double threshold = 0.3;
    std::vector<int> skipped_dims;    // constant embedding columns (rho reported as 0)
    std::vector<std::string> warnings;

    double fraction_above() const {
        return max_per_dim.empty() ? 0.0 : static_cast<double>(count_above_threshold) / static_cast<double>(max_per_dim.size());
    }
};

// embeddings: one row per series.
AcfCorrelationReport embedding_acf_correlation(const std::vector<std::vector<float>>& series,
                                               const Eigen::MatrixXd& embeddings, int n_lags = 10,
                                               double threshold = 0.3);

struct BenchRow {
    int length = 0;
    double latency_ms_mean = 0.0, latency_ms_std = 0.0;
    double throughput_mean = 0.0, throughput_std = 0.0;  // predictions per second
    int repeats = 0, warmup = 0, batch = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::vector<std::string> warnings;
};

// Runs the pipeline end to end on a batch of series.
using Pipeline = std::function<void(std::span<const std::vector<float>>)>;

// Per length: warmup single-sample calls (discarded), then `repeats` timed
// single-sample calls and `repeats` timed batch calls.
BenchReport bench_latency(const Pipeline& pipeline, std::span<const int> lengths, int repeats = 100, int warmup = 100,
                          int batch = 16);

// Deterministic test input used by the benchmark.
std::vector<float> bench_series(int length, std::uint64_t seed);

}  // namespace t2l::analysis
