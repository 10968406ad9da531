#include "t2l/tfm.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace t2l::tfm {

namespace {

constexpr float kInitStd = 0.02F;
constexpr double kEmbeddingFrequencyStd = 2.0;

}  // namespace

void TfmConfig::validate() const {
    if (context < 2) {
        throw InvalidArgument("tfm.context must be >= 2");
    }
    if (feature_dim < 1) {
        throw InvalidArgument("tfm.feature_dim must be >= 1");
    }
    if (vocab_bins < 2) {
        throw InvalidArgument("tfm.vocab_bins must be >= 2");
    }
    if (!(std::isfinite(clip_limit) && clip_limit > 0.0)) {
        throw InvalidArgument("tfm.clip_limit must be positive");
    }
    TransformerShape{feature_dim, layers, heads, ff_dim, context, false}.validate();
}

TfmConfig TfmConfig::desk() {
    return TfmConfig{};
}

TfmConfig TfmConfig::paper_shape() {
    TfmConfig c;
    c.context = 513;
    c.feature_dim = 768;
    c.layers = 2;
    c.heads = 12;
    c.ff_dim = 3072;
    return c;
}

std::vector<float> adapt_length(std::span<const float> series, int context_points) {
    if (series.empty()) {
        throw InvalidArgument("adapt_length: empty series");
    }
    if (context_points < 1) {
        throw InvalidArgument("adapt_length: context_points must be >= 1");
    }
    const auto n = series.size();
    const auto m = static_cast<std::size_t>(context_points);
    if (n <= m) {
        return {series.begin(), series.end()};
    }
    std::vector<float> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lo = i * n / m;
        const std::size_t hi = (i + 1) * n / m;
        double sum = 0.0;
        for (std::size_t t = lo; t < hi; ++t) {
            sum += series[t];
        }
        out[i] = static_cast<float>(sum / static_cast<double>(hi - lo));
    }
    return out;
}

ScaledSeries mean_scale(std::span<const float> series) {
    double total = 0.0;
    for (float v : series) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("mean_scale: series contains non-finite values");
        }
        total += std::abs(static_cast<double>(v));
    }
    double scale = series.empty() ? 0.0 : total / static_cast<double>(series.size());
    if (scale < 1e-12) {
        scale = 1.0;
    }
    ScaledSeries out;
    out.scale = static_cast<float>(scale);
    out.values.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        out.values[i] = static_cast<float>(static_cast<double>(series[i]) / scale);
    }
    return out;
}

std::vector<int> quantize(std::span<const float> scaled, const TfmConfig& config) {
    const double limit = config.clip_limit;
    const int bins = config.vocab_bins;
    std::vector<int> out(scaled.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        const double v = std::clamp(static_cast<double>(scaled[i]), -limit, limit);
        const auto b = static_cast<int>(std::floor((v + limit) / (2.0 * limit) * bins));
        out[i] = std::clamp(b, 0, bins - 1);
    }
    return out;
}

ReferenceTfm::ReferenceTfm(const TfmConfig& config) : config_(config) {
    config_.validate();

    // Bin rows are random Fourier features of the bin centre, so nearby
    // amplitudes map to nearby vectors; PAD and EOS rows are plain Gaussian.
    std::mt19937_64 rng(derive_seed(config_.init_seed, 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const int d = config_.feature_dim;
    token_embedding_.resize(config_.vocab_bins + kFirstBinToken, d);
    for (int tok = 0; tok < kFirstBinToken; ++tok) {
        for (int j = 0; j < d; ++j) {
            token_embedding_(tok, j) = static_cast<float>(normal(rng));
        }
    }
    std::vector<double> freq(static_cast<std::size_t>(d)), offset(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        freq[static_cast<std::size_t>(j)] = kEmbeddingFrequencyStd * normal(rng);
        offset[static_cast<std::size_t>(j)] = phase(rng);
    }
    const double width = 2.0 * config_.clip_limit / config_.vocab_bins;
    for (int b = 0; b < config_.vocab_bins; ++b) {
        const double centre = -config_.clip_limit + (b + 0.5) * width;
        for (int j = 0; j < d; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            token_embedding_(b + kFirstBinToken, j) =
                static_cast<float>(std::numbers::sqrt2 * std::sin(freq[jj] * centre + offset[jj]));
        }
    }

    const TransformerShape shape{d, config_.layers, config_.heads, config_.ff_dim, config_.context, false};
    stack_ = TransformerStack<float>(shape, derive_seed(config_.init_seed, 2), kInitStd);
}

std::vector<int> ReferenceTfm::tokenize(std::span<const float> series, float* scale) const {
    const auto adapted = adapt_length(series, config_.context_points());
    const auto scaled = mean_scale(adapted);
    const auto bins = quantize(scaled.values, config_);
    if (scale) {
        *scale = scaled.scale;
    }
    std::vector<int> tokens(static_cast<std::size_t>(config_.context), kPadToken);
    const std::size_t start = tokens.size() - bins.size() - 1;
    for (std::size_t i = 0; i < bins.size(); ++i) {
        tokens[start + i] = bins[i] + kFirstBinToken;
    }
    tokens.back() = kEosToken;
    return tokens;
}

TfmEmbedding ReferenceTfm::encode(std::span<const float> series) const {
    TfmEmbedding out;
    const auto tokens = tokenize(series, &out.scale);
    Mat<float> x(config_.context, config_.feature_dim);
    std::vector<std::uint8_t> valid(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = token_embedding_.row(tokens[i]);
        valid[i] = tokens[i] == kPadToken ? 0 : 1;
    }
    out.matrix = stack_.forward(x, valid, nullptr);
    return out;
}

std::vector<float> ReferenceTfm::flat_weights() const {
    std::vector<float> out(token_embedding_.data(), token_embedding_.data() + token_embedding_.size());
    const auto rest = stack_.flat_weights();
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

}  // namespace t2l::tfm
