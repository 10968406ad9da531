#include "helpers.hpp"

#include "t2l/adapter.hpp"
#include "t2l/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace t2l;
using namespace t2l::testing;
using adapter::Adapter;
using adapter::Group;

namespace {

struct Tiny {
    tfm::TfmConfig tc = tiny_tfm();
    llm::LlmConfig lc = tiny_llm();
    adapter::AdapterConfig ac = tiny_adapter();
};

}  // namespace

TEST_CASE("paper-shape parameter budgets and z_i shape") {
    const auto tc = tfm::TfmConfig::paper_shape();
    const auto lc = llm::LlmConfig::paper_shape();
    const Adapter<float> model({}, tc.feature_dim, tc.context, lc.hidden);
    const auto f = model.layout().count(Group::F);
    const auto g = model.layout().count(Group::G);
    CHECK(f >= 240000);
    CHECK(f <= 360000);
    CHECK(g >= 1400000);
    CHECK(g <= 2000000);
    CHECK(model.layout().count(Group::L) == 256 * 6 + 6);
    CHECK(model.residual_is_identity());

    const auto params = model.initial_params();
    const auto z_i = model.input_encode(random_mat<float>(513, 768, 1), params);
    CHECK(z_i.rows() == 65);
    CHECK(z_i.cols() == 64);
}

TEST_CASE("parameter count is architecture-determined") {
    Tiny t;
    auto other = t.ac;
    other.init_seed = 99;
    const Adapter<float> a(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    const Adapter<float> b(other, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    CHECK(a.layout().weights == b.layout().weights);
    CHECK(a.layout().buffers == b.layout().buffers);
    CHECK(a.initial_params().weights != b.initial_params().weights);
}

TEST_CASE("initialization conventions") {
    Tiny t;
    const Adapter<double> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    const auto p = model.initial_params();
    for (const auto& e : model.layout().entries) {
        for (std::size_t i = 0; i < e.size; ++i) {
            const double v = p.weights[e.offset + i];
            if (e.fan_in > 0) {
                CHECK(std::abs(v) <= 1.0 / std::sqrt(static_cast<double>(e.fan_in)));
            } else if (e.name.ends_with(".gamma")) {
                CHECK(v == 1.0);
            } else {
                CHECK(v == 0.0);
            }
        }
    }
    for (const auto& e : model.layout().buffer_entries) {
        const double expected = e.name.ends_with("running_var") ? 1.0 : 0.0;
        for (std::size_t i = 0; i < e.size; ++i) {
            CHECK(p.buffers[e.offset + i] == expected);
        }
    }
}

TEST_CASE("pad_features") {
    const auto z = random_mat<float>(64, 65, 4);
    const auto padded = adapter::pad_features(z, 2048);
    CHECK(padded.rows() == 64);
    CHECK(padded.cols() == 2048);
    CHECK(padded.rightCols(2048 - 65).isZero(0.0F));
    CHECK(padded.leftCols(65) == z);
    for (Eigen::Index r = 0; r < 64; ++r) {
        CHECK(padded.row(r).sum() == doctest::Approx(z.row(r).sum()));
    }
    CHECK(adapter::pad_features(z, 65) == z);
    CHECK_THROWS_AS(adapter::pad_features(z, 64), ShapeError);
}

TEST_CASE("desk-scale forward shapes") {
    const tfm::ReferenceTfm enc(tfm::TfmConfig::desk());
    const llm::ReferenceLlm<float> lm(llm::LlmConfig::desk());
    const Adapter<float> model({}, enc.feature_dim(), enc.context(), lm.hidden());
    const auto params = model.initial_params();
    const adapter::Backbones<float> bb{enc, lm};

    const auto series = sine(1440, 60.0);
    const auto z_c = enc.encode(series).matrix;
    CHECK(z_c.rows() == 129);
    CHECK(z_c.cols() == 96);
    const auto z_i = model.input_encode(z_c, params);
    CHECK(z_i.rows() == 65);
    CHECK(z_i.cols() == 64);
    const auto seq = adapter::pad_features<float>(z_i.transpose(), lm.hidden());
    CHECK(seq.rows() == 64);
    CHECK(seq.cols() == 256);
    const auto z_m = llm::mean_pool<float>(lm.forward_embeddings(seq));
    CHECK(z_m.size() == 256);
    const auto z_o = model.project(z_m, adapter::context_mean(z_c), params);
    CHECK(z_o.size() == 256);
    const auto logits = model.classify(z_o, params);
    CHECK(logits.size() == 6);

    const auto full = adapter::forward(series, bb, model, params);
    CHECK((full.logits - logits).cwiseAbs().maxCoeff() < 1e-5F);
    CHECK((full.z_o - z_o).cwiseAbs().maxCoeff() < 1e-5F);
    CHECK(adapter::forward(series, bb, model, params).logits == full.logits);
}

TEST_CASE("project residual semantics") {
    Tiny t;
    const tfm::ReferenceTfm enc(t.tc);
    const llm::ReferenceLlm<double> lm(t.lc);
    const Adapter<double> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    CHECK_FALSE(model.residual_is_identity());
    const auto params = model.initial_params();
    const Mat<double> z_c = enc.encode(sine(300, 30.0)).matrix.cast<double>();

    adapter::ForwardOptions no_res;
    no_res.residual = false;
    const auto r = model.forward_batch({z_c}, lm, params, no_res);
    const Vec<double> z_m = r.z_m.row(0).transpose();
    const Vec<double> zero = Vec<double>::Zero(t.tc.feature_dim);
    CHECK((model.project(z_m, zero, params) - r.z_o.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const auto with_res = model.project(z_m, adapter::context_mean(z_c), params);
    CHECK((with_res - r.z_o.row(0).transpose()).cwiseAbs().maxCoeff() > 1e-6);

    const std::vector<std::vector<float>> one{sine(300, 30.0)};
    const adapter::Backbones<double> bb{enc, lm};
    const auto emb = adapter::embed_batch<double>(one, bb, model, params, false);
    CHECK((emb.row(0).transpose() - adapter::extract_embedding<double>(one[0], bb, model, params)).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK((emb.row(0).transpose() - r.z_o.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("classify is affine") {
    Tiny t;
    const Adapter<double> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    auto params = model.initial_params();
    const auto& w = model.layout().find("l.fc.w");
    const auto& b = model.layout().find("l.fc.b");
    std::fill_n(params.weights.begin() + static_cast<std::ptrdiff_t>(w.offset), w.size, 0.0);
    for (std::size_t i = 0; i < b.size; ++i) {
        params.weights[b.offset + i] = 0.5 * static_cast<double>(i) - 1.0;
    }
    const Vec<double> z = Vec<double>::Random(t.ac.proj_dims.second);
    const auto logits = model.classify(z, params);
    REQUIRE(logits.size() == t.ac.num_classes);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        CHECK(logits(i) == 0.5 * static_cast<double>(i) - 1.0);
    }
    const auto fresh = model.classify(z, model.initial_params());
    const Vec<double> p = (fresh.array() - fresh.maxCoeff()).exp();
    CHECK((p / p.sum()).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(model.classify(Vec<double>::Zero(3), params), ShapeError);
}

TEST_CASE("input_encode rejects mismatched shapes") {
    Tiny t;
    const Adapter<float> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    CHECK_THROWS_AS(model.input_encode(random_mat<float>(t.tc.context + 1, t.tc.feature_dim, 1), model.initial_params()),
                    ShapeError);
    auto bad = t.ac;
    bad.out_channels = t.lc.hidden + 1;
    CHECK_THROWS_AS(Adapter<float>(bad, t.tc.feature_dim, t.tc.context, t.lc.hidden), InvalidArgument);
}

TEST_CASE("train-mode batch gradient matches finite differences") {
    Tiny t;
    const tfm::ReferenceTfm enc(t.tc);
    const llm::ReferenceLlm<double> lm(t.lc);
    const Adapter<double> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    const auto params = model.initial_params();
    std::vector<Mat<double>> batch;
    for (int i = 0; i < 3; ++i) {
        batch.push_back(enc.encode(sine(200 + 40 * i, 20.0 + 7.0 * i)).matrix.cast<double>());
    }
    const std::vector<int> labels{0, 2, 1};
    adapter::ForwardOptions opts;
    opts.mode = nn::Mode::Train;
    opts.dropout_seed = 5;

    const auto loss = [&](const adapter::AdapterParams<double>& p) {
        auto running = p.buffers;
        return trainer::cross_entropy(model.forward_batch(batch, lm, p, opts, &running).logits,
                                      std::span<const int>(labels));
    };
    auto running = params.buffers;
    Adapter<double>::Tape tape;
    const auto r = model.forward_batch(batch, lm, params, opts, &running, &tape);
    CHECK(running != params.buffers);
    Mat<double> dlogits;
    trainer::cross_entropy(r.logits, std::span<const int>(labels), &dlogits);
    const auto grad = model.backward_batch(tape, dlogits, lm, params);

    double worst = 0.0;
    auto probe = params;
    for (std::size_t idx = 0; idx < params.weights.size(); idx += 7) {
        const double h = 1e-5 * std::max(1.0, std::abs(params.weights[idx]));
        probe.weights[idx] += h;
        const double up = loss(probe);
        probe.weights[idx] -= 2 * h;
        const double down = loss(probe);
        probe.weights[idx] = params.weights[idx];
        const double numeric = (up - down) / (2 * h);
        // Conv biases feeding a batch-statistics BN have exactly zero gradient.
        if (std::abs(numeric) < 1e-9 && std::abs(grad[idx]) < 1e-12) {
            continue;
        }
        worst = std::max(worst, std::abs(numeric - grad[idx]) / std::max({std::abs(numeric), std::abs(grad[idx]), 1e-7}));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("gradient_check on the tiny model") {
    Tiny t;
    const tfm::ReferenceTfm enc(t.tc);
    const llm::ReferenceLlm<double> lm(t.lc);
    const Adapter<double> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    const auto params = model.initial_params();
    const Mat<double> z_c = enc.encode(sine(500, 45.0)).matrix.cast<double>();
    const auto report = trainer::gradient_check(params, z_c, 1, model, lm, 1e-4, 3, 40);
    CHECK(report.passed);
    CHECK(report.count(Group::F) == 40);
    CHECK(report.count(Group::G) == 40);
    CHECK(report.count(Group::L) > 0);
    const auto again = trainer::gradient_check(params, z_c, 1, model, lm, 1e-4, 3, 40);
    CHECK(again.max_rel_error == report.max_rel_error);
    CHECK(again.checked.size() == report.checked.size());
}

TEST_CASE("gradient_check excludes parameters with no path to the loss") {
    Tiny t;
    const tfm::ReferenceTfm enc(t.tc);
    const llm::ReferenceLlm<double> lm(t.lc);
    const Adapter<double> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    auto params = model.initial_params();
    // gamma = 0 in the last BN zeroes z_o, cutting f and g off from the loss.
    const auto& gamma = model.layout().find("g.bn2.gamma");
    const auto& beta = model.layout().find("g.bn2.beta");
    std::fill_n(params.weights.begin() + static_cast<std::ptrdiff_t>(gamma.offset), gamma.size, 0.0);
    std::fill_n(params.weights.begin() + static_cast<std::ptrdiff_t>(beta.offset), beta.size, 0.25);
    const Mat<double> z_c = enc.encode(sine(500, 45.0)).matrix.cast<double>();
    const auto report = trainer::gradient_check(params, z_c, 0, model, lm, 1e-4, 4, 20);
    CHECK(report.excluded_zero > 0);
    CHECK(report.count(Group::F) == 0);
    CHECK(report.passed);
}

TEST_CASE("gradient_check skips parameters whose stencil crosses a ReLU switch") {
    Tiny t;
    const tfm::ReferenceTfm enc(t.tc);
    const llm::ReferenceLlm<double> lm(t.lc);
    const Adapter<double> model(t.ac, t.tc.feature_dim, t.tc.context, t.lc.hidden);
    auto params = model.initial_params();
    // Every z_o unit sits exactly at the kink; only g.bn2 can move it.
    const auto& gamma = model.layout().find("g.bn2.gamma");
    const auto& beta = model.layout().find("g.bn2.beta");
    std::fill_n(params.weights.begin() + static_cast<std::ptrdiff_t>(gamma.offset), gamma.size, 0.0);
    std::fill_n(params.weights.begin() + static_cast<std::ptrdiff_t>(beta.offset), beta.size, 0.0);
    const Mat<double> z_c = enc.encode(sine(500, 45.0)).matrix.cast<double>();
    const auto report = trainer::gradient_check(params, z_c, 0, model, lm, 1e-4, 4, 20);
    CHECK(report.excluded_kink > 0);
    CHECK(report.count(Group::G) == 0);
    CHECK(report.count(Group::L) > 0);
    CHECK(report.passed);
}
