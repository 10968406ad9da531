#pragma once

// Brute-force reference implementations used to cross-check the metric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace t2l::testing {

// Pair counting: concordant pairs score 1, ties 1/2.
inline double auroc_pairs(std::span<const double> s, std::span<const int> y) {
    double hits = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1.0;
                hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return hits / pairs;
}

// Threshold sweep: every distinct score, from high to low, predicts positive for s >= t.
inline double auprc_sweep(std::span<const double> s, std::span<const int> y) {
    std::vector<double> thresholds(s.begin(), s.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double positives = 0.0;
    for (int v : y) {
        positives += v;
    }
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= t) {
                (y[i] == 1 ? tp : fp) += 1.0;
            }
        }
        const double recall = tp / positives;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return ap;
}

// Rank by counting (ties share the average rank), then Pearson.
inline std::vector<double> count_ranks(std::span<const double> x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0.0, equal = 0.0;
        for (double v : x) {
            less += v < x[i] ? 1.0 : 0.0;
            equal += v == x[i] ? 1.0 : 0.0;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

inline double spearman_ranks(std::span<const double> x, std::span<const double> y) {
    const auto rx = count_ranks(x);
    const auto ry = count_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace t2l::testing
