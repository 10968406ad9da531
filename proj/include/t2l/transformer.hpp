#pragma once

// Frozen pre-norm transformer stack shared by both reference backbones.
//
// Layer: x += Attn(RMSNorm(x)); x += SwiGLU(RMSNorm(x)); output RMSNorm(x).
// Attention uses rotary position embeddings (half-split pairs) and either a
// causal mask or a key-validity mask. Weights are drawn once from a seed and
// never change; backward() propagates gradients to the input only.

#include "t2l/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace t2l {

struct TransformerShape {
    int dim = 0;
    int layers = 0;
    int heads = 0;
    int ff_dim = 0;
    int max_positions = 0;
    bool causal = false;

    void validate() const;
};

template <class T>
struct TransformerLayerWeights {
    Vec<T> attn_norm;
    Mat<T> wq, wk, wv, wo;  // dim x dim, applied as x * W
    Vec<T> ffn_norm;
    Mat<T> w_gate, w_up;    // dim x ff
    Mat<T> w_down;          // ff x dim
};

template <class T>
class TransformerStack {
public:
    struct LayerTape {
        Mat<T> x_in;
        Vec<T> inv_rms1;
        Mat<T> xn1;
        Mat<T> q, k, v;              // after rotary
        std::vector<Mat<T>> probs;   // per head, tokens x tokens
        Mat<T> attn;                 // concatenated head outputs
        Mat<T> x_mid;
        Vec<T> inv_rms2;
        Mat<T> xn2;
        Mat<T> gate, up;
    };

    struct Tape {
        std::vector<LayerTape> layers;
        Mat<T> x_final;
        Vec<T> inv_rms_final;
        std::vector<std::uint8_t> key_valid;
    };

    TransformerStack() = default;

    // Gaussian(0, init_std) for projections; norm gains are 1. Weights are drawn in
    // float32 so that every precision instantiation sees identical values.
    TransformerStack(const TransformerShape& shape, std::uint64_t seed, float init_std);

    template <class U>
    TransformerStack<U> cast() const;

    const TransformerShape& shape() const { return shape_; }

    // x: tokens x dim. key_valid (optional, length tokens): 0 marks keys no query may attend to.
    Mat<T> forward(const Mat<T>& x, std::span<const std::uint8_t> key_valid, Tape* tape) const;

    // Gradient of a scalar loss w.r.t. the input of forward(), given dL/d(output).
    Mat<T> backward(const Tape& tape, const Mat<T>& grad_out) const;

    std::size_t parameter_count() const;
    std::vector<float> flat_weights() const;

private:
    template <class U>
    friend class TransformerStack;

    void rotate(Mat<T>& m, int tokens, bool inverse) const;

    TransformerShape shape_{};
    std::vector<TransformerLayerWeights<T>> layers_;
    Vec<T> final_norm_;
    Mat<T> rope_cos_, rope_sin_;  // max_positions x head_dim/2
};

extern template class TransformerStack<float>;
extern template class TransformerStack<double>;

}  // namespace t2l
