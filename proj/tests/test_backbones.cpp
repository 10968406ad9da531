#include "helpers.hpp"

#include "t2l/llm.hpp"
#include "t2l/tfm.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace t2l;
using namespace t2l::testing;

// ----------------------------- tfm front end -----------------------------

TEST_CASE("adapt_length") {
    const auto ramp = noise(512, 1);
    CHECK(tfm::adapt_length(ramp, 512) == ramp);

    // Oracle: 1440 points into 512 windows of width 2 or 3, the pattern of floor(i*n/m).
    std::vector<float> idx(1440);
    for (int i = 0; i < 1440; ++i) {
        idx[static_cast<std::size_t>(i)] = static_cast<float>(i);
    }
    const auto out = tfm::adapt_length(idx, 512);
    REQUIRE(out.size() == 512);
    int twos = 0, threes = 0;
    for (int i = 0; i < 512; ++i) {
        const int lo = i * 1440 / 512, hi = (i + 1) * 1440 / 512;
        (hi - lo == 2 ? twos : threes) += 1;
        CHECK(out[static_cast<std::size_t>(i)] == doctest::Approx((lo + hi - 1) / 2.0));
    }
    CHECK(twos == 96);
    CHECK(threes == 416);

    const std::vector<float> flat(777, 2.5F);
    const auto f = tfm::adapt_length(flat, 128);
    CHECK(std::all_of(f.begin(), f.end(), [](float v) { return v == 2.5F; }));
    CHECK_THROWS_AS(tfm::adapt_length(std::vector<float>{}, 8), InvalidArgument);
}

TEST_CASE("mean_scale") {
    auto r = tfm::mean_scale(std::vector<float>(5, 2.0F));
    CHECK(r.scale == 2.0F);
    CHECK(r.values == std::vector<float>(5, 1.0F));
    r = tfm::mean_scale(std::vector<float>(4, 0.0F));
    CHECK(r.scale == 1.0F);
    CHECK(r.values == std::vector<float>(4, 0.0F));
    r = tfm::mean_scale(std::vector<float>{-3.0F, 3.0F});
    CHECK(r.scale == 3.0F);
    CHECK(r.values == std::vector<float>{-1.0F, 1.0F});
}

TEST_CASE("quantize") {
    tfm::TfmConfig c;
    c.vocab_bins = 10;
    c.clip_limit = 5.0;
    CHECK(tfm::quantize(std::vector<float>{0.0F}, c)[0] == 5);
    CHECK(tfm::quantize(std::vector<float>{-100.0F}, c)[0] == 0);
    CHECK(tfm::quantize(std::vector<float>{5.0F}, c)[0] == 9);
    CHECK(tfm::quantize(std::vector<float>{1e9F}, c)[0] == 9);
    CHECK(tfm::quantize(std::vector<float>{-4.0F}, c)[0] == 1);
}

TEST_CASE("tokenize left-pads and ends with EOS") {
    const tfm::ReferenceTfm enc(tiny_tfm());
    const auto toks = enc.tokenize(sine(10, 5.0));
    REQUIRE(toks.size() == 17);
    CHECK(std::all_of(toks.begin(), toks.begin() + 6, [](int t) { return t == tfm::kPadToken; }));
    CHECK(std::all_of(toks.begin() + 6, toks.end() - 1, [](int t) { return t >= tfm::kFirstBinToken; }));
    CHECK(toks.back() == tfm::kEosToken);
    const auto full = enc.tokenize(sine(1440, 30.0));
    CHECK(std::count(full.begin(), full.end(), tfm::kPadToken) == 0);
}

TEST_CASE("encode shape, determinism and seed sensitivity") {
    const auto cfg = tiny_tfm();
    const tfm::ReferenceTfm enc(cfg);
    for (int len : {1, 16, 512, 1440, 4096}) {
        const auto z = enc.encode(sine(len, 30.0));
        CHECK(z.matrix.rows() == cfg.context);
        CHECK(z.matrix.cols() == cfg.feature_dim);
        CHECK(z.matrix.allFinite());
    }
    const auto x = sine(1440, 60.0);
    CHECK(enc.encode(x).matrix == enc.encode(x).matrix);

    auto other = cfg;
    other.init_seed ^= 1;
    const tfm::ReferenceTfm enc2(other);
    CHECK((enc.encode(x).matrix - enc2.encode(x).matrix).cwiseAbs().maxCoeff() > 1e-3F);
    CHECK(enc.flat_weights() != enc2.flat_weights());
}

TEST_CASE("default and paper-shape encoder dimensions") {
    CHECK(tfm::TfmConfig::paper_shape().context == 513);
    CHECK(tfm::TfmConfig::paper_shape().feature_dim == 768);
    CHECK(tfm::TfmConfig::paper_shape().context_points() == 512);
    CHECK_THROWS_AS([] {
        tfm::TfmConfig c;
        c.context = 1;
        c.validate();
    }(), InvalidArgument);
}

// ----------------------------- language backbone -----------------------------

TEST_CASE("forward_embeddings contract") {
    const auto cfg = tiny_llm();
    const llm::ReferenceLlm<float> lm(cfg);
    const auto x = random_mat<float>(4, cfg.hidden, 3);
    const auto y = lm.forward_embeddings(x);
    CHECK(y.rows() == 4);
    CHECK(y.cols() == cfg.hidden);
    CHECK(y == lm.forward_embeddings(x));

    CHECK_THROWS_AS(lm.forward_embeddings(random_mat<float>(4, cfg.hidden + 1, 3)), ShapeError);
    CHECK_THROWS_AS(lm.forward_embeddings(random_mat<float>(cfg.max_positions + 1, cfg.hidden, 3)), CapacityError);

    // Feature-axis zero padding still yields bounded finite states.
    Mat<float> padded = Mat<float>::Zero(cfg.max_positions, cfg.hidden);
    padded.leftCols(5) = random_mat<float>(cfg.max_positions, 5, 4);
    const auto out = lm.forward_embeddings(padded);
    CHECK(out.allFinite());
    CHECK(out.cwiseAbs().maxCoeff() < 1e3F);

    // Position sensitivity: swapping two rows changes more than a row swap would.
    Mat<float> swapped = x;
    swapped.row(0).swap(swapped.row(2));
    Mat<float> y_swapped_back = lm.forward_embeddings(swapped);
    y_swapped_back.row(0).swap(y_swapped_back.row(2));
    CHECK((y_swapped_back - y).cwiseAbs().maxCoeff() > 1e-4F);
}

TEST_CASE("float and double backbones agree") {
    const auto cfg = tiny_llm();
    const llm::ReferenceLlm<float> lf(cfg);
    const llm::ReferenceLlm<double> ld(cfg);
    CHECK(lf.flat_weights() == ld.flat_weights());
    const auto x = random_mat<double>(5, cfg.hidden, 8);
    const Mat<float> yf = lf.forward_embeddings(x.cast<float>());
    const Mat<double> yd = ld.forward_embeddings(x);
    CHECK((yf.cast<double>() - yd).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("input gradient of the language backbone") {
    const auto cfg = tiny_llm();
    const llm::ReferenceLlm<double> lm(cfg);
    const auto x = random_mat<double>(3, cfg.hidden, 21);
    const auto w = random_mat<double>(3, cfg.hidden, 22);
    std::unique_ptr<llm::LanguageBackbone<double>::Tape> tape;
    lm.forward_embeddings(x, &tape);
    const auto g = lm.backward_embeddings(*tape, w);
    const auto loss = [&](const Mat<double>& in) { return lm.forward_embeddings(in).cwiseProduct(w).sum(); };
    for (int k = 0; k < 12; ++k) {
        const int i = k % 3, j = (k * 5) % cfg.hidden;
        Mat<double> plus = x, minus = x;
        plus(i, j) += 1e-6;
        minus(i, j) -= 1e-6;
        const double numeric = (loss(plus) - loss(minus)) / 2e-6;
        CHECK(g(i, j) == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("mean_pool") {
    Mat<double> one(1, 3);
    one << 1, 2, 3;
    CHECK(llm::mean_pool(one) == one.row(0).transpose());
    Mat<double> sym(2, 3);
    sym << 1, -2, 3, -1, 2, -3;
    CHECK(llm::mean_pool(sym).isZero(0.0));
    Mat<double> two(2, 3);
    two << 1, 2, 3, 3, 4, 5;
    CHECK(llm::mean_pool(two) == Vec<double>{{2.0, 3.0, 4.0}});
    CHECK_THROWS_AS(llm::mean_pool(Mat<double>(0, 3)), InvalidArgument);
}

TEST_CASE("llm configs") {
    CHECK(llm::LlmConfig::paper_shape().hidden == 2048);
    auto c = tiny_llm();
    c.attend_padding = false;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
