#pragma once

// Tiny model shapes shared by the unit tests so every module test runs in well under a second.

#include "t2l/adapter.hpp"
#include "t2l/llm.hpp"
#include "t2l/tfm.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace t2l::testing {

inline tfm::TfmConfig tiny_tfm() {
    tfm::TfmConfig c;
    c.context = 17;
    c.feature_dim = 8;
    c.vocab_bins = 32;
    c.layers = 1;
    c.heads = 2;
    c.ff_dim = 16;
    return c;
}

inline llm::LlmConfig tiny_llm() {
    llm::LlmConfig c;
    c.hidden = 16;
    c.layers = 1;
    c.heads = 2;
    c.ff_dim = 32;
    c.max_positions = 16;
    return c;
}

inline adapter::AdapterConfig tiny_adapter() {
    adapter::AdapterConfig c;
    c.base_filters = 4;
    c.blocks = 3;
    c.out_channels = 5;
    c.out_tokens = 4;
    c.proj_dims = {12, 6};
    c.num_classes = 3;
    return c;
}

inline std::vector<float> sine(int length, double period, double phase = 0.0) {
    std::vector<float> x(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
        x[static_cast<std::size_t>(t)] = static_cast<float>(std::sin(2.0 * M_PI * t / period + phase));
    }
    return x;
}

inline std::vector<float> noise(int length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0F, 1.0F);
    std::vector<float> x(static_cast<std::size_t>(length));
    for (auto& v : x) {
        v = n(rng);
    }
    return x;
}

template <class T>
Mat<T> random_mat(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<T>(n(rng));
    }
    return m;
}

}  // namespace t2l::testing
