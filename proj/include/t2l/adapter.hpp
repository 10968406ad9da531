#pragma once

// Trainable mapping around the two frozen backbones:
//   z_c --f--> z_i --pad--> LLM --mean--> z_m --g(+R z_c_mean)--> z_o --l--> logits
//
// f is a 1-D ResNet over the encoder's feature channels: stem conv/BN/ReLU, one
// Type-1 block, Type-2 (pre-activation) blocks, BN/ReLU, then a 1x1 conv and an
// adaptive average pool that pin the output to (out_channels, out_tokens).
// g is FC/BN/ReLU twice with a fixed residual map R from the pooled encoder
// features into the first FC layer; l is a single affine layer.

#include "t2l/common.hpp"
#include "t2l/layers.hpp"
#include "t2l/llm.hpp"
#include "t2l/tfm.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace t2l::adapter {

struct AdapterConfig {
    int base_filters = 32;
    int blocks = 6;
    int kernel_size = 3;
    int stride = 2;
    int out_channels = 65;
    int out_tokens = 64;
    std::pair<int, int> proj_dims{768, 256};
    int num_classes = 6;
    double dropout = 0.1;
    std::uint64_t init_seed = 0xADA97E11ULL;

    void validate() const;
    bool operator==(const AdapterConfig&) const = default;
};

enum class Group : std::uint8_t { F, G, L };
std::string to_string(Group g);

struct ParamEntry {
    std::string name;
    Group group = Group::F;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t fan_in = 0;  // 0 for BN affine parameters and biases
};

struct ParamLayout {
    std::vector<ParamEntry> entries;
    std::vector<ParamEntry> buffer_entries;
    std::size_t weights = 0;
    std::size_t buffers = 0;

    std::size_t count(Group g) const;
    const ParamEntry& find(const std::string& name) const;
};

template <class T>
struct AdapterParams {
    ParamVector<T> weights;
    ParamVector<T> buffers;  // BN running mean / variance

    template <class U>
    AdapterParams<U> cast() const {
        return {ParamVector<U>(weights.begin(), weights.end()), ParamVector<U>(buffers.begin(), buffers.end())};
    }
};

namespace detail {

struct ConvRef {
    nn::Conv1dShape shape;
    std::size_t w = 0, b = 0;
};

struct BnRef {
    int channels = 0;
    std::size_t gamma = 0, beta = 0;  // into weights
    std::size_t mean = 0, var = 0;    // into buffers
};

struct FcRef {
    int in = 0, out = 0;
    std::size_t w = 0, b = 0;  // w: out x in row-major
};

struct BlockRef {
    bool type1 = false;
    int in_ch = 0, out_ch = 0;
    bool pool = false;
    BnRef bn0;  // Type-2 only
    ConvRef conv1;
    BnRef bn1;
    ConvRef conv2;
};

}  // namespace detail

struct ForwardOptions {
    nn::Mode mode = nn::Mode::Eval;
    bool residual = true;
    std::uint64_t dropout_seed = 0;
};

template <class T>
struct BatchResult {
    Mat<T> logits;  // N x num_classes
    Mat<T> z_o;     // N x proj_dims.second
    Mat<T> z_m;     // N x hidden
    std::vector<Mat<T>> z_i;  // out_channels x out_tokens each
};

template <class T>
class Adapter {
public:
    using Batch = nn::Batch<T>;

    struct BlockTape {
        Batch in;
        nn::BatchNormTape<T> bn0, bn1;
        Batch r0, x1, c1, r1, x2, c2;
        Batch m0, m1;
        std::vector<std::vector<int>> argmax_main, argmax_skip;
    };

    struct Tape {
        ForwardOptions options;
        Batch x0, stem_conv, stem_act;
        nn::BatchNormTape<T> stem_bn;
        std::vector<BlockTape> blocks;
        Batch f_out, final_act, head;
        nn::BatchNormTape<T> final_bn;
        std::vector<std::unique_ptr<typename llm::LanguageBackbone<T>::Tape>> llm;
        Mat<T> z_m, h1, a1, h2, z_o;
        nn::BatchNormTape<T> g_bn1, g_bn2;
    };

    // feature_dim / context describe the encoder output, hidden the LLM width.
    Adapter(const AdapterConfig& config, int feature_dim, int context, int hidden);

    const AdapterConfig& config() const { return config_; }
    const ParamLayout& layout() const { return layout_; }
    int feature_dim() const { return feature_dim_; }
    int context() const { return context_; }
    int hidden() const { return hidden_; }
    // Spatial length entering the head, before adaptive pooling.
    int f_length() const { return f_length_; }
    const std::vector<detail::BlockRef>& blocks() const { return blocks_; }
    const Mat<T>& residual_map() const { return residual_; }
    bool residual_is_identity() const { return residual_identity_; }

    AdapterParams<T> initial_params() const;

    // Eval-mode single-sample stages.
    Mat<T> input_encode(const Mat<T>& z_c, const AdapterParams<T>& params) const;
    Vec<T> project(const Vec<T>& z_m, const Vec<T>& z_c_mean, const AdapterParams<T>& params) const;
    Vec<T> classify(const Vec<T>& z_o, const AdapterParams<T>& params) const;

    // Batched path. In Train mode the BN running statistics are folded into
    // *running (which may alias params.buffers' storage owner but not be null).
    BatchResult<T> forward_batch(const std::vector<Mat<T>>& z_c, const llm::LanguageBackbone<T>& lm,
                                 const AdapterParams<T>& params, const ForwardOptions& options,
                                 ParamVector<T>* running = nullptr, Tape* tape = nullptr) const;

    // Gradient of the loss w.r.t. params.weights given dL/dlogits (N x classes).
    ParamVector<T> backward_batch(const Tape& tape, const Mat<T>& dlogits, const llm::LanguageBackbone<T>& lm,
                                  const AdapterParams<T>& params) const;

private:
    Batch run_f(const Batch& x, const AdapterParams<T>& params, const ForwardOptions& options, T* running,
                Tape* tape) const;

    AdapterConfig config_;
    int feature_dim_, context_, hidden_;
    int f_length_ = 0;
    ParamLayout layout_;
    detail::ConvRef stem_;
    detail::BnRef stem_bn_;
    std::vector<detail::BlockRef> blocks_;
    detail::BnRef final_bn_;
    detail::ConvRef head_;
    detail::FcRef fc1_, fc2_, cls_;
    detail::BnRef g_bn1_, g_bn2_;
    Mat<T> residual_;  // proj_dims.first x feature_dim
    bool residual_identity_ = false;
};

extern template class Adapter<float>;
extern template class Adapter<double>;

// Right-pads each row with zeros up to hidden.
template <class T>
Mat<T> pad_features(const Mat<T>& z_it, int hidden);

// Arithmetic mean over the context axis of an encoder embedding.
template <class T>
Vec<T> context_mean(const Mat<T>& z_c);

template <class T>
struct Backbones {
    const tfm::TimeSeriesEncoder& tfm;
    const llm::LanguageBackbone<T>& llm;
};

template <class T>
struct ForwardResult {
    Vec<T> logits;
    Vec<T> z_o;
    tfm::TfmEmbedding z_c;
};

// Eval-mode end-to-end pass for one series.
template <class T>
ForwardResult<T> forward(std::span<const float> series, const Backbones<T>& backbones, const Adapter<T>& adapter,
                         const AdapterParams<T>& params);

// Eval-mode logits (N x classes) for a batch of raw series.
template <class T>
Mat<T> predict_batch(std::span<const std::vector<float>> series, const Backbones<T>& backbones,
                     const Adapter<T>& adapter, const AdapterParams<T>& params);

// Eval-mode z_o rows for a batch of raw series; residual=false gives the probing embedding.
template <class T>
Mat<T> embed_batch(std::span<const std::vector<float>> series, const Backbones<T>& backbones,
                   const Adapter<T>& adapter, const AdapterParams<T>& params, bool residual = false);

// z_o with the residual addend forced to zero.
template <class T>
Vec<T> extract_embedding(std::span<const float> series, const Backbones<T>& backbones, const Adapter<T>& adapter,
                         const AdapterParams<T>& params);

}  // namespace t2l::adapter
