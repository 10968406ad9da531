#include "t2l/layers.hpp"

#include <cmath>
#include <random>

namespace t2l::nn {

int Conv1dShape::out_length(int length) const {
    const int span = length + 2 * pad - kernel;
    if (span < 0) {
        throw ShapeError("conv1d: input length " + std::to_string(length) + " shorter than kernel");
    }
    return span / stride + 1;
}

namespace {

template <class T>
Mat<T> im2col(const Conv1dShape& s, const Mat<T>& x, int out_len) {
    const auto len = static_cast<int>(x.cols());
    Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(s.in) * s.kernel, out_len);
    for (int c = 0; c < s.in; ++c) {
        for (int j = 0; j < s.kernel; ++j) {
            T* dst = cols.row(c * s.kernel + j).data();
            for (int t = 0; t < out_len; ++t) {
                const int src = t * s.stride + j - s.pad;
                if (src >= 0 && src < len) {
                    dst[t] = x(c, src);
                }
            }
        }
    }
    return cols;
}

}  // namespace

template <class T>
Mat<T> conv1d_forward(const Conv1dShape& s, const T* w, const T* b, const Mat<T>& x) {
    if (x.rows() != s.in) {
        throw ShapeError("conv1d: expected " + std::to_string(s.in) + " input channels, got " + std::to_string(x.rows()));
    }
    const int out_len = s.out_length(static_cast<int>(x.cols()));
    const Eigen::Map<const Mat<T>> wm(w, s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
    Mat<T> y(s.out, out_len);
    if (s.kernel == 1 && s.stride == 1 && s.pad == 0) {
        y.noalias() = wm * x;
    } else {
        y.noalias() = wm * im2col(s, x, out_len);
    }
    y.colwise() += Eigen::Map<const Vec<T>>(b, s.out);
    return y;
}

template <class T>
void conv1d_backward(const Conv1dShape& s, const T* w, const Mat<T>& x, const Mat<T>& dy, T* dw, T* db, Mat<T>* dx) {
    const int out_len = static_cast<int>(dy.cols());
    const auto len = static_cast<int>(x.cols());
    const Eigen::Map<const Mat<T>> wm(w, s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
    Eigen::Map<Mat<T>> dwm(dw, s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
    Eigen::Map<Vec<T>>(db, s.out) += dy.rowwise().sum();

    const bool pointwise = s.kernel == 1 && s.stride == 1 && s.pad == 0;
    if (pointwise) {
        dwm.noalias() += dy * x.transpose();
    } else {
        dwm.noalias() += dy * im2col(s, x, out_len).transpose();
    }
    if (!dx) {
        return;
    }
    const Mat<T> dcols = wm.transpose() * dy;
    if (pointwise) {
        *dx = dcols;
        return;
    }
    dx->setZero(s.in, len);
    for (int c = 0; c < s.in; ++c) {
        for (int j = 0; j < s.kernel; ++j) {
            const T* src = dcols.row(c * s.kernel + j).data();
            for (int t = 0; t < out_len; ++t) {
                const int pos = t * s.stride + j - s.pad;
                if (pos >= 0 && pos < len) {
                    (*dx)(c, pos) += src[t];
                }
            }
        }
    }
}

template <class T>
Batch<T> batchnorm_forward(const Batch<T>& x, const T* gamma, const T* beta, T* running_mean, T* running_var,
                           Mode mode, BatchNormTape<T>* tape) {
    if (x.empty()) {
        throw ShapeError("batchnorm: empty batch");
    }
    const auto channels = x.front().rows();
    Vec<T> mean(channels), inv_std(channels);
    if (mode == Mode::Train) {
        double count = 0.0;
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(channels);
        for (const auto& m : x) {
            sum += m.template cast<double>().rowwise().sum();
            count += static_cast<double>(m.cols());
        }
        const Eigen::VectorXd mu = sum / count;
        Eigen::VectorXd sq = Eigen::VectorXd::Zero(channels);
        for (const auto& m : x) {
            sq += (m.template cast<double>().colwise() - mu).array().square().rowwise().sum().matrix();
        }
        const Eigen::VectorXd var = sq / count;
        const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
        for (Eigen::Index c = 0; c < channels; ++c) {
            mean(c) = static_cast<T>(mu(c));
            inv_std(c) = static_cast<T>(1.0 / std::sqrt(var(c) + kBnEps));
            running_mean[c] = static_cast<T>((1.0 - kBnMomentum) * running_mean[c] + kBnMomentum * mu(c));
            running_var[c] = static_cast<T>((1.0 - kBnMomentum) * running_var[c] + kBnMomentum * var(c) * unbias);
        }
    } else {
        for (Eigen::Index c = 0; c < channels; ++c) {
            mean(c) = running_mean[c];
            inv_std(c) = T(1) / std::sqrt(running_var[c] + static_cast<T>(kBnEps));
        }
    }

    const Eigen::Map<const Vec<T>> g(gamma, channels), b(beta, channels);
    Batch<T> y(x.size());
    if (tape) {
        tape->mode = mode;
        tape->inv_std = inv_std;
        tape->xhat.resize(x.size());
    }
    for (std::size_t n = 0; n < x.size(); ++n) {
        Mat<T> xhat = (x[n].colwise() - mean).array().colwise() * inv_std.array();
        y[n] = (xhat.array().colwise() * g.array()).colwise() + b.array();
        if (tape) {
            tape->xhat[n] = std::move(xhat);
        }
    }
    return y;
}

template <class T>
Batch<T> batchnorm_backward(const BatchNormTape<T>& tape, const Batch<T>& dy, const T* gamma, T* dgamma, T* dbeta) {
    const auto channels = tape.inv_std.size();
    const Eigen::Map<const Vec<T>> g(gamma, channels);
    Eigen::Map<Vec<T>> dg(dgamma, channels), db(dbeta, channels);

    Vec<T> sum_dy = Vec<T>::Zero(channels), sum_dy_xhat = Vec<T>::Zero(channels);
    T count = 0;
    for (std::size_t n = 0; n < dy.size(); ++n) {
        sum_dy += dy[n].rowwise().sum();
        sum_dy_xhat += (dy[n].array() * tape.xhat[n].array()).rowwise().sum().matrix();
        count += static_cast<T>(dy[n].cols());
    }
    dg += sum_dy_xhat;
    db += sum_dy;

    Batch<T> dx(dy.size());
    const Vec<T> scale = (g.array() * tape.inv_std.array()).matrix();
    for (std::size_t n = 0; n < dy.size(); ++n) {
        if (tape.mode == Mode::Eval) {
            dx[n] = dy[n].array().colwise() * scale.array();
        } else {
            Mat<T> t = dy[n].colwise() - sum_dy / count;
            t.array() -= tape.xhat[n].array().colwise() * (sum_dy_xhat / count).array();
            dx[n] = t.array().colwise() * scale.array();
        }
    }
    return dx;
}

template <class T>
void relu_inplace(Batch<T>& x) {
    for (auto& m : x) {
        m = m.cwiseMax(T(0));
    }
}

template <class T>
void relu_backward_inplace(const Batch<T>& out, Batch<T>& dy) {
    for (std::size_t n = 0; n < dy.size(); ++n) {
        dy[n] = (out[n].array() > T(0)).select(dy[n], T(0));
    }
}

template <class T>
Batch<T> dropout_masks(const Batch<T>& like, double p, std::uint64_t seed) {
    Batch<T> masks(like.size());
    if (p <= 0.0) {
        return masks;
    }
    const T keep = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t n = 0; n < like.size(); ++n) {
        std::mt19937_64 rng(derive_seed(seed, n));
        std::bernoulli_distribution drop(p);
        Mat<T> m(like[n].rows(), like[n].cols());
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = drop(rng) ? T(0) : keep;
        }
        masks[n] = std::move(m);
    }
    return masks;
}

template <class T>
void apply_masks(Batch<T>& x, const Batch<T>& masks) {
    for (std::size_t n = 0; n < x.size() && n < masks.size(); ++n) {
        if (masks[n].size() > 0) {
            x[n].array() *= masks[n].array();
        }
    }
}

template <class T>
Mat<T> maxpool2_forward(const Mat<T>& x, std::vector<int>* argmax) {
    const auto out_len = x.cols() / 2;
    Mat<T> y(x.rows(), out_len);
    if (argmax) {
        argmax->resize(static_cast<std::size_t>(y.size()));
    }
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        for (Eigen::Index t = 0; t < out_len; ++t) {
            const Eigen::Index a = 2 * t;
            const Eigen::Index pick = x(c, a + 1) > x(c, a) ? a + 1 : a;
            y(c, t) = x(c, pick);
            if (argmax) {
                (*argmax)[static_cast<std::size_t>(c * out_len + t)] = static_cast<int>(pick);
            }
        }
    }
    return y;
}

template <class T>
Mat<T> maxpool2_backward(const Mat<T>& dy, const std::vector<int>& argmax, int in_length) {
    Mat<T> dx = Mat<T>::Zero(dy.rows(), in_length);
    const auto out_len = dy.cols();
    for (Eigen::Index c = 0; c < dy.rows(); ++c) {
        for (Eigen::Index t = 0; t < out_len; ++t) {
            dx(c, argmax[static_cast<std::size_t>(c * out_len + t)]) += dy(c, t);
        }
    }
    return dx;
}

namespace {

std::pair<int, int> pool_window(int i, int in_length, int out_length) {
    const int lo = static_cast<int>((static_cast<long long>(i) * in_length) / out_length);
    const int hi = static_cast<int>(((static_cast<long long>(i) + 1) * in_length + out_length - 1) / out_length);
    return {lo, hi};
}

}  // namespace

template <class T>
Mat<T> adaptive_avgpool_forward(const Mat<T>& x, int out_length) {
    const auto in_length = static_cast<int>(x.cols());
    Mat<T> y(x.rows(), out_length);
    for (int i = 0; i < out_length; ++i) {
        const auto [lo, hi] = pool_window(i, in_length, out_length);
        y.col(i) = x.middleCols(lo, hi - lo).rowwise().mean();
    }
    return y;
}

template <class T>
Mat<T> adaptive_avgpool_backward(const Mat<T>& dy, int in_length) {
    const auto out_length = static_cast<int>(dy.cols());
    Mat<T> dx = Mat<T>::Zero(dy.rows(), in_length);
    for (int i = 0; i < out_length; ++i) {
        const auto [lo, hi] = pool_window(i, in_length, out_length);
        dx.middleCols(lo, hi - lo).colwise() += dy.col(i) / static_cast<T>(hi - lo);
    }
    return dx;
}

#define T2L_INSTANTIATE(T)                                                                                         \
    template Mat<T> conv1d_forward(const Conv1dShape&, const T*, const T*, const Mat<T>&);                        \
    template void conv1d_backward(const Conv1dShape&, const T*, const Mat<T>&, const Mat<T>&, T*, T*, Mat<T>*);   \
    template Batch<T> batchnorm_forward(const Batch<T>&, const T*, const T*, T*, T*, Mode, BatchNormTape<T>*);    \
    template Batch<T> batchnorm_backward(const BatchNormTape<T>&, const Batch<T>&, const T*, T*, T*);             \
    template void relu_inplace(Batch<T>&);                                                                        \
    template void relu_backward_inplace(const Batch<T>&, Batch<T>&);                                              \
    template Batch<T> dropout_masks(const Batch<T>&, double, std::uint64_t);                                      \
    template void apply_masks(Batch<T>&, const Batch<T>&);                                                        \
    template Mat<T> maxpool2_forward(const Mat<T>&, std::vector<int>*);                                           \
    template Mat<T> maxpool2_backward(const Mat<T>&, const std::vector<int>&, int);                               \
    template Mat<T> adaptive_avgpool_forward(const Mat<T>&, int);                                                 \
    template Mat<T> adaptive_avgpool_backward(const Mat<T>&, int);

T2L_INSTANTIATE(float)
T2L_INSTANTIATE(double)

#undef T2L_INSTANTIATE

}  // namespace t2l::nn
