#pragma once

// Batched 1-D layer primitives with explicit backward passes.
//
// A batch is a vector of per-sample (channels x length) matrices. Parameters are
// raw pointers into a flat vector so one optimizer state covers all layers.

#include "t2l/common.hpp"

#include <cstdint>
#include <vector>

namespace t2l::nn {

template <class T>
using Batch = std::vector<Mat<T>>;

enum class Mode { Train, Eval };

struct Conv1dShape {
    int in = 0;
    int out = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;

    int out_length(int length) const;
    std::size_t weight_count() const {
        return static_cast<std::size_t>(out) * static_cast<std::size_t>(in) * static_cast<std::size_t>(kernel);
    }
};

// w: out x (in * kernel) row-major; b: out.
template <class T>
Mat<T> conv1d_forward(const Conv1dShape& s, const T* w, const T* b, const Mat<T>& x);

// Accumulates into dw / db; writes dx when non-null.
template <class T>
void conv1d_backward(const Conv1dShape& s, const T* w, const Mat<T>& x, const Mat<T>& dy, T* dw, T* db, Mat<T>* dx);

template <class T>
struct BatchNormTape {
    Mode mode = Mode::Eval;
    Vec<T> inv_std;
    Batch<T> xhat;
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Normalizes per channel over (batch, length). Train mode uses batch statistics and
// folds them into the running buffers (unbiased variance); Eval uses the buffers.
template <class T>
Batch<T> batchnorm_forward(const Batch<T>& x, const T* gamma, const T* beta, T* running_mean, T* running_var,
                           Mode mode, BatchNormTape<T>* tape);

template <class T>
Batch<T> batchnorm_backward(const BatchNormTape<T>& tape, const Batch<T>& dy, const T* gamma, T* dgamma, T* dbeta);

template <class T>
void relu_inplace(Batch<T>& x);

// Zeroes dy where the forward output was not positive.
template <class T>
void relu_backward_inplace(const Batch<T>& out, Batch<T>& dy);

// Inverted dropout; masks hold 0 or 1/(1-p). Empty masks mean identity.
template <class T>
Batch<T> dropout_masks(const Batch<T>& like, double p, std::uint64_t seed);

template <class T>
void apply_masks(Batch<T>& x, const Batch<T>& masks);

// Kernel 2, stride 2, floor. argmax holds the winning input column per output.
template <class T>
Mat<T> maxpool2_forward(const Mat<T>& x, std::vector<int>* argmax);

template <class T>
Mat<T> maxpool2_backward(const Mat<T>& dy, const std::vector<int>& argmax, int in_length);

// Window i covers [floor(i*L/n), ceil((i+1)*L/n)).
template <class T>
Mat<T> adaptive_avgpool_forward(const Mat<T>& x, int out_length);

template <class T>
Mat<T> adaptive_avgpool_backward(const Mat<T>& dy, int in_length);

}  // namespace t2l::nn
