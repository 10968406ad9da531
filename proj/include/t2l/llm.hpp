#pragma once

// Frozen language-model backbone fed with embeddings directly (no token ids).

#include "t2l/common.hpp"
#include "t2l/transformer.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace t2l::llm {

struct LlmConfig {
    int hidden = 256;
    int layers = 2;
    int heads = 4;
    int ff_dim = 512;
    int max_positions = 128;
    std::uint64_t init_seed = 0x5EED1B0BULL;
    // Padding lives on the feature axis, so every injected token stays visible.
    bool attend_padding = true;

    void validate() const;

    bool operator==(const LlmConfig&) const = default;

    static LlmConfig desk();
    static LlmConfig paper_shape();
};

template <class T>
class LanguageBackbone {
public:
    struct Tape {
        virtual ~Tape() = default;
    };

    virtual ~LanguageBackbone() = default;
    virtual int hidden() const = 0;
    virtual int max_positions() const = 0;

    // seq: tokens x hidden. Returns last-layer hidden states of the same shape.
    virtual Mat<T> forward_embeddings(const Mat<T>& seq, std::unique_ptr<Tape>* tape = nullptr) const = 0;

    // dL/d(seq) given dL/d(output) and the tape recorded by forward_embeddings.
    virtual Mat<T> backward_embeddings(const Tape& tape, const Mat<T>& grad_out) const = 0;

    virtual std::vector<float> flat_weights() const = 0;
};

// Causal decoder stack with rotary positions. Weights are drawn in float32 from
// init_seed, so the float and double instantiations hold identical values.
template <class T>
class ReferenceLlm final : public LanguageBackbone<T> {
public:
    using typename LanguageBackbone<T>::Tape;

    explicit ReferenceLlm(const LlmConfig& config);

    const LlmConfig& config() const { return config_; }
    int hidden() const override { return config_.hidden; }
    int max_positions() const override { return config_.max_positions; }

    Mat<T> forward_embeddings(const Mat<T>& seq, std::unique_ptr<Tape>* tape = nullptr) const override;
    Mat<T> backward_embeddings(const Tape& tape, const Mat<T>& grad_out) const override;
    std::vector<float> flat_weights() const override;
    std::size_t parameter_count() const { return stack_.parameter_count(); }

private:
    struct StackTape;

    LlmConfig config_;
    TransformerStack<T> stack_;
};

extern template class ReferenceLlm<float>;
extern template class ReferenceLlm<double>;

// Arithmetic mean over the token axis.
template <class T>
Vec<T> mean_pool(const Mat<T>& states);

}  // namespace t2l::llm
