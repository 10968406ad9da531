#pragma once

// Frozen time-series encoder: series -> fixed (context x feature_dim) matrix.
//
// The reference encoder tokenizes like a quantizing forecaster front-end:
// window-mean to at most context-1 points, divide by mean |x|, clamp to
// [-clip, clip], bin uniformly, append EOS, left-pad with PAD, then run a
// bidirectional frozen transformer with pad keys masked out.

#include "t2l/common.hpp"
#include "t2l/transformer.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace t2l::tfm {

inline constexpr int kPadToken = 0;
inline constexpr int kEosToken = 1;
inline constexpr int kFirstBinToken = 2;

struct TfmConfig {
    int context = 129;
    int feature_dim = 96;
    int vocab_bins = 512;
    double clip_limit = 15.0;
    int layers = 2;
    int heads = 4;
    int ff_dim = 384;
    std::uint64_t init_seed = 0x7F4A7C15ULL;

    void validate() const;
    int context_points() const { return context - 1; }

    bool operator==(const TfmConfig&) const = default;

    static TfmConfig desk();
    static TfmConfig paper_shape();
};

struct TfmEmbedding {
    Mat<float> matrix;  // context x feature_dim
    float scale = 1.0F;
};

// Identity when series.size() <= context_points; otherwise the means of
// context_points contiguous windows [floor(i*n/m), floor((i+1)*n/m)).
std::vector<float> adapt_length(std::span<const float> series, int context_points);

struct ScaledSeries {
    std::vector<float> values;
    float scale = 1.0F;
};

// scale = mean |x| (1 when below 1e-12); values = x / scale.
ScaledSeries mean_scale(std::span<const float> series);

// Bin index floor((v + L) / (2L) * B), clamped to [0, B-1].
std::vector<int> quantize(std::span<const float> scaled, const TfmConfig& config);

// Pluggable frozen encoder. Implementations are immutable after construction
// and safe to call concurrently.
class TimeSeriesEncoder {
public:
    virtual ~TimeSeriesEncoder() = default;
    virtual int context() const = 0;
    virtual int feature_dim() const = 0;
    virtual TfmEmbedding encode(std::span<const float> series) const = 0;
    virtual std::vector<float> flat_weights() const = 0;
};

class ReferenceTfm final : public TimeSeriesEncoder {
public:
    explicit ReferenceTfm(const TfmConfig& config);

    int context() const override { return config_.context; }
    int feature_dim() const override { return config_.feature_dim; }
    const TfmConfig& config() const { return config_; }

    TfmEmbedding encode(std::span<const float> series) const override;

    // PAD / EOS / bin token ids for a series, left-padded to context.
    std::vector<int> tokenize(std::span<const float> series, float* scale = nullptr) const;

    std::vector<float> flat_weights() const override;

private:
    TfmConfig config_;
    Mat<float> token_embedding_;  // (vocab_bins + 2) x feature_dim
    TransformerStack<float> stack_;
};

}  // namespace t2l::tfm
