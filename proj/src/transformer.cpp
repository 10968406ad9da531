#include "t2l/transformer.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace t2l {

namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kRopeBase = 10000.0;

template <class T>
void rms_forward(const Mat<T>& x, const Vec<T>& gain, Mat<T>& out, Vec<T>& inv) {
    const auto d = static_cast<T>(x.cols());
    inv = ((x.array().square().rowwise().sum() / d) + static_cast<T>(kRmsEps)).rsqrt().matrix();
    out = (x.array().colwise() * inv.array()).rowwise() * gain.transpose().array();
}

template <class T>
Mat<T> rms_backward(const Mat<T>& dy, const Mat<T>& x, const Vec<T>& inv, const Vec<T>& gain) {
    const auto d = static_cast<T>(x.cols());
    const Mat<T> gy = dy.array().rowwise() * gain.transpose().array();
    const Vec<T> dot = (gy.array() * x.array()).rowwise().sum().matrix();
    const Vec<T> inv3 = inv.array().cube();
    Mat<T> dx = gy.array().colwise() * inv.array();
    dx.array() -= x.array().colwise() * (inv3.array() * dot.array() / d);
    return dx;
}

template <class T>
Mat<T> gaussian(std::mt19937_64& rng, int rows, int cols, float stddev) {
    std::normal_distribution<float> normal(0.0F, stddev);
    Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<T>(normal(rng));
    }
    return m;
}

}  // namespace

void TransformerShape::validate() const {
    if (dim < 1 || layers < 0 || heads < 1 || ff_dim < 1 || max_positions < 1) {
        throw InvalidArgument("transformer: dim, heads, ff_dim and max_positions must be >= 1");
    }
    if (dim % heads != 0 || (dim / heads) % 2 != 0) {
        throw InvalidArgument("transformer: dim must split into heads of even width (dim=" + std::to_string(dim) +
                              ", heads=" + std::to_string(heads) + ")");
    }
}

template <class T>
TransformerStack<T>::TransformerStack(const TransformerShape& shape, std::uint64_t seed, float init_std)
    : shape_(shape) {
    shape_.validate();
    std::mt19937_64 rng(seed);
    const int d = shape.dim;
    layers_.resize(static_cast<std::size_t>(shape.layers));
    for (auto& w : layers_) {
        w.attn_norm = Vec<T>::Ones(d);
        w.ffn_norm = Vec<T>::Ones(d);
        w.wq = gaussian<T>(rng, d, d, init_std);
        w.wk = gaussian<T>(rng, d, d, init_std);
        w.wv = gaussian<T>(rng, d, d, init_std);
        w.wo = gaussian<T>(rng, d, d, init_std);
        w.w_gate = gaussian<T>(rng, d, shape.ff_dim, init_std);
        w.w_up = gaussian<T>(rng, d, shape.ff_dim, init_std);
        w.w_down = gaussian<T>(rng, shape.ff_dim, d, init_std);
    }
    final_norm_ = Vec<T>::Ones(d);

    const int half = d / shape.heads / 2;
    rope_cos_.resize(shape.max_positions, half);
    rope_sin_.resize(shape.max_positions, half);
    for (int t = 0; t < shape.max_positions; ++t) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::pow(kRopeBase, -2.0 * i / (2.0 * half));
            rope_cos_(t, i) = static_cast<T>(std::cos(t * freq));
            rope_sin_(t, i) = static_cast<T>(std::sin(t * freq));
        }
    }
}

template <class T>
template <class U>
TransformerStack<U> TransformerStack<T>::cast() const {
    TransformerStack<U> out;
    out.shape_ = shape_;
    out.layers_.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& a = layers_[l];
        auto& b = out.layers_[l];
        b.attn_norm = a.attn_norm.template cast<U>();
        b.ffn_norm = a.ffn_norm.template cast<U>();
        b.wq = a.wq.template cast<U>();
        b.wk = a.wk.template cast<U>();
        b.wv = a.wv.template cast<U>();
        b.wo = a.wo.template cast<U>();
        b.w_gate = a.w_gate.template cast<U>();
        b.w_up = a.w_up.template cast<U>();
        b.w_down = a.w_down.template cast<U>();
    }
    out.final_norm_ = final_norm_.template cast<U>();
    out.rope_cos_ = rope_cos_.template cast<U>();
    out.rope_sin_ = rope_sin_.template cast<U>();
    return out;
}

template <class T>
void TransformerStack<T>::rotate(Mat<T>& m, int tokens, bool inverse) const {
    const int dh = shape_.dim / shape_.heads;
    const int half = dh / 2;
    const T sign = inverse ? T(-1) : T(1);
    for (int t = 0; t < tokens; ++t) {
        for (int h = 0; h < shape_.heads; ++h) {
            T* row = m.row(t).data() + h * dh;
            for (int i = 0; i < half; ++i) {
                const T c = rope_cos_(t, i);
                const T s = sign * rope_sin_(t, i);
                const T a = row[i];
                const T b = row[i + half];
                row[i] = a * c - b * s;
                row[i + half] = a * s + b * c;
            }
        }
    }
}

template <class T>
Mat<T> TransformerStack<T>::forward(const Mat<T>& input, std::span<const std::uint8_t> key_valid, Tape* tape) const {
    const auto tokens = static_cast<int>(input.rows());
    if (input.cols() != shape_.dim) {
        throw ShapeError("transformer: input width " + std::to_string(input.cols()) + " != model dim " +
                         std::to_string(shape_.dim));
    }
    if (tokens > shape_.max_positions) {
        throw CapacityError("transformer: " + std::to_string(tokens) + " tokens exceed max_positions " +
                            std::to_string(shape_.max_positions));
    }
    if (tokens < 1) {
        throw ShapeError("transformer: empty input sequence");
    }
    if (!key_valid.empty() && static_cast<int>(key_valid.size()) != tokens) {
        throw ShapeError("transformer: key mask length does not match token count");
    }

    const int dh = shape_.dim / shape_.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    if (tape) {
        tape->layers.assign(layers_.size(), {});
        tape->key_valid.assign(key_valid.begin(), key_valid.end());
    }

    Mat<T> x = input;
    Mat<T> xn, q, k, v, attn, scores;
    Vec<T> inv;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& w = layers_[l];
        LayerTape* lt = tape ? &tape->layers[l] : nullptr;
        if (lt) {
            lt->x_in = x;
        }

        rms_forward(x, w.attn_norm, xn, inv);
        q.noalias() = xn * w.wq;
        k.noalias() = xn * w.wk;
        v.noalias() = xn * w.wv;
        rotate(q, tokens, false);
        rotate(k, tokens, false);

        attn.setZero(tokens, shape_.dim);
        if (lt) {
            lt->probs.resize(static_cast<std::size_t>(shape_.heads));
        }
        for (int h = 0; h < shape_.heads; ++h) {
            scores.noalias() = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
            scores *= scale;
            for (int i = 0; i < tokens; ++i) {
                T row_max = neg_inf;
                for (int j = 0; j < tokens; ++j) {
                    const bool masked = (shape_.causal && j > i) || (!key_valid.empty() && key_valid[static_cast<std::size_t>(j)] == 0);
                    if (masked) {
                        scores(i, j) = neg_inf;
                    } else {
                        row_max = std::max(row_max, scores(i, j));
                    }
                }
                if (row_max == neg_inf) {
                    scores.row(i).setZero();
                    continue;
                }
                T total = 0;
                for (int j = 0; j < tokens; ++j) {
                    const T e = scores(i, j) == neg_inf ? T(0) : std::exp(scores(i, j) - row_max);
                    scores(i, j) = e;
                    total += e;
                }
                scores.row(i) /= total;
            }
            attn.middleCols(h * dh, dh).noalias() = scores * v.middleCols(h * dh, dh);
            if (lt) {
                lt->probs[static_cast<std::size_t>(h)] = scores;
            }
        }
        if (lt) {
            lt->inv_rms1 = inv;
            lt->xn1 = xn;
            lt->q = q;
            lt->k = k;
            lt->v = v;
            lt->attn = attn;
        }
        x.noalias() += attn * w.wo;

        if (lt) {
            lt->x_mid = x;
        }
        rms_forward(x, w.ffn_norm, xn, inv);
        Mat<T> gate = xn * w.w_gate;
        Mat<T> up = xn * w.w_up;
        const Mat<T> act = (gate.array() / (T(1) + (-gate.array()).exp())) * up.array();
        x.noalias() += act * w.w_down;
        if (lt) {
            lt->inv_rms2 = inv;
            lt->xn2 = xn;
            lt->gate = std::move(gate);
            lt->up = std::move(up);
        }
    }

    Mat<T> out;
    rms_forward(x, final_norm_, out, inv);
    if (tape) {
        tape->x_final = std::move(x);
        tape->inv_rms_final = inv;
    }
    return out;
}

template <class T>
Mat<T> TransformerStack<T>::backward(const Tape& tape, const Mat<T>& grad_out) const {
    const auto tokens = static_cast<int>(grad_out.rows());
    const int dh = shape_.dim / shape_.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> dx = rms_backward(grad_out, tape.x_final, tape.inv_rms_final, final_norm_);
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& w = layers_[li];
        const auto& lt = tape.layers[li];

        // SwiGLU branch.
        const Mat<T> d_act = dx * w.w_down.transpose();
        const auto sig = (T(1) / (T(1) + (-lt.gate.array()).exp())).eval();
        const auto silu = (lt.gate.array() * sig).eval();
        const auto dsilu = (sig * (T(1) + lt.gate.array() * (T(1) - sig))).eval();
        const Mat<T> d_gate = d_act.array() * lt.up.array() * dsilu;
        const Mat<T> d_up = d_act.array() * silu;
        Mat<T> d_xn2 = d_gate * w.w_gate.transpose();
        d_xn2.noalias() += d_up * w.w_up.transpose();
        dx += rms_backward(d_xn2, lt.x_mid, lt.inv_rms2, w.ffn_norm);

        // Attention branch.
        const Mat<T> d_attn = dx * w.wo.transpose();
        Mat<T> dq(tokens, shape_.dim), dk(tokens, shape_.dim), dv(tokens, shape_.dim);
        for (int h = 0; h < shape_.heads; ++h) {
            const auto& p = lt.probs[static_cast<std::size_t>(h)];
            const auto d_out = d_attn.middleCols(h * dh, dh);
            const Mat<T> dp = d_out * lt.v.middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh).noalias() = p.transpose() * d_out;
            const Vec<T> row_dot = (dp.array() * p.array()).rowwise().sum().matrix();
            const Mat<T> ds = (p.array() * (dp.array().colwise() - row_dot.array())) * scale;
            dq.middleCols(h * dh, dh).noalias() = ds * lt.k.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh).noalias() = ds.transpose() * lt.q.middleCols(h * dh, dh);
        }
        rotate(dq, tokens, true);
        rotate(dk, tokens, true);
        Mat<T> d_xn1 = dq * w.wq.transpose();
        d_xn1.noalias() += dk * w.wk.transpose();
        d_xn1.noalias() += dv * w.wv.transpose();
        dx += rms_backward(d_xn1, lt.x_in, lt.inv_rms1, w.attn_norm);
    }
    return dx;
}

template <class T>
std::size_t TransformerStack<T>::parameter_count() const {
    std::size_t n = static_cast<std::size_t>(final_norm_.size());
    for (const auto& w : layers_) {
        n += static_cast<std::size_t>(w.attn_norm.size() + w.ffn_norm.size() + w.wq.size() + w.wk.size() + w.wv.size() +
                                      w.wo.size() + w.w_gate.size() + w.w_up.size() + w.w_down.size());
    }
    return n;
}

template <class T>
std::vector<float> TransformerStack<T>::flat_weights() const {
    std::vector<float> out;
    out.reserve(parameter_count());
    auto append = [&out](const auto& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            out.push_back(static_cast<float>(m.data()[i]));
        }
    };
    for (const auto& w : layers_) {
        append(w.attn_norm);
        append(w.wq);
        append(w.wk);
        append(w.wv);
        append(w.wo);
        append(w.ffn_norm);
        append(w.w_gate);
        append(w.w_up);
        append(w.w_down);
    }
    append(final_norm_);
    return out;
}

template class TransformerStack<float>;
template class TransformerStack<double>;
template TransformerStack<float> TransformerStack<float>::cast<float>() const;
template TransformerStack<double> TransformerStack<float>::cast<double>() const;

}  // namespace t2l
