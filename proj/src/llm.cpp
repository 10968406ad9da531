#include "t2l/llm.hpp"

namespace t2l::llm {

namespace {

constexpr float kInitStd = 0.02F;

TransformerShape shape_of(const LlmConfig& c) {
    return TransformerShape{c.hidden, c.layers, c.heads, c.ff_dim, c.max_positions, true};
}

}  // namespace

void LlmConfig::validate() const {
    if (hidden < 1) {
        throw InvalidArgument("llm.hidden must be >= 1");
    }
    if (!attend_padding) {
        throw InvalidArgument("llm.attend_padding=false is not supported by the reference backbone");
    }
    shape_of(*this).validate();
}

LlmConfig LlmConfig::desk() {
    return LlmConfig{};
}

LlmConfig LlmConfig::paper_shape() {
    LlmConfig c;
    c.hidden = 2048;
    c.layers = 1;
    c.heads = 16;
    c.ff_dim = 2048;
    c.max_positions = 128;
    return c;
}

template <class T>
struct ReferenceLlm<T>::StackTape final : LanguageBackbone<T>::Tape {
    typename TransformerStack<T>::Tape inner;
};

template <class T>
ReferenceLlm<T>::ReferenceLlm(const LlmConfig& config) : config_(config) {
    config_.validate();
    const TransformerStack<float> weights(shape_of(config_), derive_seed(config_.init_seed, 1), kInitStd);
    stack_ = weights.template cast<T>();
}

template <class T>
Mat<T> ReferenceLlm<T>::forward_embeddings(const Mat<T>& seq, std::unique_ptr<Tape>* tape) const {
    if (seq.cols() != config_.hidden) {
        throw ShapeError("llm: sequence width " + std::to_string(seq.cols()) + " != hidden " +
                         std::to_string(config_.hidden));
    }
    if (!tape) {
        return stack_.forward(seq, {}, nullptr);
    }
    auto st = std::make_unique<StackTape>();
    Mat<T> out = stack_.forward(seq, {}, &st->inner);
    *tape = std::move(st);
    return out;
}

template <class T>
Mat<T> ReferenceLlm<T>::backward_embeddings(const Tape& tape, const Mat<T>& grad_out) const {
    const auto* st = dynamic_cast<const StackTape*>(&tape);
    if (!st) {
        throw InvalidArgument("llm: tape was not produced by this backbone");
    }
    return stack_.backward(st->inner, grad_out);
}

template <class T>
std::vector<float> ReferenceLlm<T>::flat_weights() const {
    return stack_.flat_weights();
}

template <class T>
Vec<T> mean_pool(const Mat<T>& states) {
    if (states.rows() < 1) {
        throw InvalidArgument("mean_pool: zero tokens");
    }
    return states.colwise().mean().transpose();
}

template class ReferenceLlm<float>;
template class ReferenceLlm<double>;
template Vec<float> mean_pool(const Mat<float>&);
template Vec<double> mean_pool(const Mat<double>&);

}  // namespace t2l::llm
