#pragma once

#include "t2l/common.hpp"

#include <span>
#include <vector>

namespace t2l::metrics {

// 1-based ranks with ties sharing their average rank.
std::vector<double> midranks(std::span<const double> values);

// Probability that a random positive outscores a random negative, ties counting
// one half (Mann-Whitney U / (P * N)). Labels are 0 / 1.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision: sum over distinct descending thresholds of
// (recall_k - recall_{k-1}) * precision_k.
double auprc(std::span<const double> scores, std::span<const int> labels);

}  // namespace t2l::metrics
