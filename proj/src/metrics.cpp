#include "t2l/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace t2l::metrics {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("metric: scores and labels differ in length");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) {
            throw InvalidArgument("metric: labels must be 0 or 1");
        }
    }
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

std::vector<double> midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) {
            ++j;
        }
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            ranks[order[k]] = rank;
        }
        i = j;
    }
    return ranks;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0.0 || neg == 0.0) {
        throw UndefinedMetric("auroc: both classes must be present");
    }
    const auto ranks = midranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            rank_sum += ranks[i];
        }
    }
    const double u = rank_sum - pos * (pos + 1.0) / 2.0;
    return u / (pos * neg);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    if (pos == 0.0) {
        throw UndefinedMetric("auprc: no positive labels");
    }
    const auto order = descending_order(scores);
    double ap = 0.0, tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] == 1 ? tp : fp) += 1.0;
            ++i;
        }
        const double recall = tp / pos;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return ap;
}

}  // namespace t2l::metrics
