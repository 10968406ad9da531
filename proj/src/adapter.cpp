#include "t2l/adapter.hpp"

#include <cmath>
#include <random>
#include <type_traits>

namespace t2l::adapter {

using detail::BlockRef;
using detail::BnRef;
using detail::ConvRef;
using detail::FcRef;

void AdapterConfig::validate() const {
    if (base_filters < 1 || blocks < 1 || out_channels < 1 || out_tokens < 1 || num_classes < 1 ||
        proj_dims.first < 1 || proj_dims.second < 1) {
        throw InvalidArgument("adapter: all dimensions must be >= 1");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw InvalidArgument("adapter.kernel_size must be a positive odd number");
    }
    if (stride < 1) {
        throw InvalidArgument("adapter.stride must be >= 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw InvalidArgument("adapter.dropout must lie in [0, 1)");
    }
    if (blocks > 16) {
        throw InvalidArgument("adapter.blocks must be <= 16");
    }
}

std::string to_string(Group g) {
    switch (g) {
    case Group::F:
        return "f";
    case Group::G:
        return "g";
    case Group::L:
        return "l";
    }
    return "?";
}

std::size_t ParamLayout::count(Group g) const {
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.group == g) {
            n += e.size;
        }
    }
    return n;
}

const ParamEntry& ParamLayout::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) {
            return e;
        }
    }
    throw InvalidArgument("adapter: no parameter named " + name);
}

namespace {

template <class T>
using Batch = nn::Batch<T>;

template <class T>
Batch<T> rows_to_batch(const Mat<T>& m) {
    Batch<T> b(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index n = 0; n < m.rows(); ++n) {
        b[static_cast<std::size_t>(n)] = m.row(n).transpose();
    }
    return b;
}

template <class T>
Mat<T> batch_to_rows(const Batch<T>& b) {
    Mat<T> m(static_cast<Eigen::Index>(b.size()), b.front().rows());
    for (std::size_t n = 0; n < b.size(); ++n) {
        m.row(static_cast<Eigen::Index>(n)) = b[n].col(0).transpose();
    }
    return m;
}

template <class T>
Eigen::Map<const Mat<T>> fc_weight(const FcRef& fc, const ParamVector<T>& w) {
    return {w.data() + fc.w, fc.out, fc.in};
}

template <class T>
Mat<T> fc_forward(const FcRef& fc, const ParamVector<T>& w, const Mat<T>& x) {
    Mat<T> y = x * fc_weight(fc, w).transpose();
    y.rowwise() += Eigen::Map<const Vec<T>>(w.data() + fc.b, fc.out).transpose();
    return y;
}

template <class T>
Mat<T> fc_backward(const FcRef& fc, const ParamVector<T>& w, const Mat<T>& x, const Mat<T>& dy, ParamVector<T>& grad) {
    Eigen::Map<Mat<T>>(grad.data() + fc.w, fc.out, fc.in).noalias() += dy.transpose() * x;
    Eigen::Map<Vec<T>>(grad.data() + fc.b, fc.out) += dy.colwise().sum().transpose();
    return dy * fc_weight(fc, w);
}

template <class T>
Batch<T> conv_all(const ConvRef& c, const ParamVector<T>& w, const Batch<T>& x) {
    Batch<T> y(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        y[n] = nn::conv1d_forward(c.shape, w.data() + c.w, w.data() + c.b, x[n]);
    }
    return y;
}

template <class T>
Batch<T> conv_all_backward(const ConvRef& c, const ParamVector<T>& w, const Batch<T>& x, const Batch<T>& dy,
                           ParamVector<T>& grad) {
    Batch<T> dx(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        nn::conv1d_backward(c.shape, w.data() + c.w, x[n], dy[n], grad.data() + c.w, grad.data() + c.b, &dx[n]);
    }
    return dx;
}

template <class T>
Batch<T> bn(const BnRef& r, const ParamVector<T>& w, T* buffers, const Batch<T>& x, nn::Mode mode,
            std::type_identity_t<nn::BatchNormTape<T>>* tape) {
    return nn::batchnorm_forward(x, w.data() + r.gamma, w.data() + r.beta, buffers + r.mean, buffers + r.var, mode,
                                 tape);
}

template <class T>
Batch<T> bn_backward(const BnRef& r, const ParamVector<T>& w, const nn::BatchNormTape<T>& tape, const Batch<T>& dy,
                     ParamVector<T>& grad) {
    return nn::batchnorm_backward(tape, dy, w.data() + r.gamma, grad.data() + r.gamma, grad.data() + r.beta);
}

template <class T>
Batch<T> masked(const Batch<T>& x, const Batch<T>& masks) {
    Batch<T> y = x;
    nn::apply_masks(y, masks);
    return y;
}

template <class T>
Mat<T> pad_channels(const Mat<T>& x, int channels) {
    if (x.rows() == channels) {
        return x;
    }
    Mat<T> y = Mat<T>::Zero(channels, x.cols());
    y.topRows(x.rows()) = x;
    return y;
}

}  // namespace

template <class T>
Adapter<T>::Adapter(const AdapterConfig& config, int feature_dim, int context, int hidden)
    : config_(config), feature_dim_(feature_dim), context_(context), hidden_(hidden) {
    config_.validate();
    if (feature_dim < 1 || context < 1 || hidden < 1) {
        throw InvalidArgument("adapter: backbone dimensions must be >= 1");
    }
    if (config_.out_channels > hidden) {
        throw InvalidArgument("adapter.out_channels (" + std::to_string(config_.out_channels) +
                              ") exceeds llm hidden (" + std::to_string(hidden) + ")");
    }

    auto add = [this](const std::string& name, Group g, std::size_t size, std::size_t fan_in) {
        layout_.entries.push_back({name, g, layout_.weights, size, fan_in});
        layout_.weights += size;
        return layout_.entries.back().offset;
    };
    auto add_buffer = [this](const std::string& name, std::size_t size) {
        layout_.buffer_entries.push_back({name, Group::F, layout_.buffers, size, 0});
        layout_.buffers += size;
        return layout_.buffer_entries.back().offset;
    };
    auto conv = [&](const std::string& name, nn::Conv1dShape s) {
        ConvRef c{s};
        c.w = add(name + ".w", Group::F, s.weight_count(), static_cast<std::size_t>(s.in) * s.kernel);
        c.b = add(name + ".b", Group::F, static_cast<std::size_t>(s.out), 0);
        return c;
    };
    auto norm = [&](const std::string& name, Group g, int channels) {
        BnRef r;
        r.channels = channels;
        r.gamma = add(name + ".gamma", g, static_cast<std::size_t>(channels), 0);
        r.beta = add(name + ".beta", g, static_cast<std::size_t>(channels), 0);
        r.mean = add_buffer(name + ".running_mean", static_cast<std::size_t>(channels));
        r.var = add_buffer(name + ".running_var", static_cast<std::size_t>(channels));
        return r;
    };
    auto fc = [&](const std::string& name, Group g, int in, int out) {
        FcRef r{in, out};
        r.w = add(name + ".w", g, static_cast<std::size_t>(in) * out, static_cast<std::size_t>(in));
        r.b = add(name + ".b", g, static_cast<std::size_t>(out), 0);
        return r;
    };

    const int k = config_.kernel_size;
    const int pad = k / 2;
    stem_ = conv("f.stem.conv", {feature_dim, config_.base_filters, k, config_.stride, pad});
    stem_bn_ = norm("f.stem.bn", Group::F, config_.base_filters);
    int length = stem_.shape.out_length(context);

    int prev = config_.base_filters;
    for (int b = 0; b < config_.blocks; ++b) {
        BlockRef block;
        const std::string name = "f.block" + std::to_string(b);
        block.type1 = b == 0;
        block.in_ch = prev;
        block.out_ch = config_.base_filters << (b / 2);
        // Pool only where channels grow and enough positions remain for the head.
        block.pool = !block.type1 && block.out_ch > prev && length >= 2 * config_.out_tokens;
        if (!block.type1) {
            block.bn0 = norm(name + ".bn0", Group::F, block.in_ch);
        }
        block.conv1 = conv(name + ".conv1", {block.in_ch, block.out_ch, k, 1, pad});
        block.bn1 = norm(name + ".bn1", Group::F, block.out_ch);
        block.conv2 = conv(name + ".conv2", {block.out_ch, block.out_ch, k, 1, pad});
        if (block.pool) {
            length /= 2;
        }
        blocks_.push_back(block);
        prev = block.out_ch;
    }
    f_length_ = length;
    final_bn_ = norm("f.final.bn", Group::F, prev);
    head_ = conv("f.head.conv", {prev, config_.out_channels, 1, 1, 0});

    const auto [p1, p2] = config_.proj_dims;
    fc1_ = fc("g.fc1", Group::G, hidden, p1);
    g_bn1_ = norm("g.bn1", Group::G, p1);
    fc2_ = fc("g.fc2", Group::G, p1, p2);
    g_bn2_ = norm("g.bn2", Group::G, p2);
    cls_ = fc("l.fc", Group::L, p2, config_.num_classes);

    residual_identity_ = feature_dim == p1;
    if (residual_identity_) {
        residual_ = Mat<T>::Identity(p1, p1);
    } else {
        std::mt19937_64 rng(derive_seed(config_.init_seed, 2));
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(feature_dim)));
        residual_.resize(p1, feature_dim);
        for (Eigen::Index i = 0; i < residual_.size(); ++i) {
            residual_.data()[i] = static_cast<T>(normal(rng));
        }
    }
}

template <class T>
AdapterParams<T> Adapter<T>::initial_params() const {
    AdapterParams<T> p;
    p.weights.assign(layout_.weights, T(0));
    std::mt19937_64 rng(derive_seed(config_.init_seed, 1));
    for (const auto& e : layout_.entries) {
        const bool gamma = e.name.ends_with(".gamma");
        for (std::size_t i = 0; i < e.size; ++i) {
            double v = 0.0;
            if (gamma) {
                v = 1.0;
            } else if (e.fan_in > 0) {
                const double bound = 1.0 / std::sqrt(static_cast<double>(e.fan_in));
                v = std::uniform_real_distribution<double>(-bound, bound)(rng);
            }
            p.weights[e.offset + i] = static_cast<T>(v);
        }
    }
    p.buffers.assign(layout_.buffers, T(0));
    for (const auto& e : layout_.buffer_entries) {
        if (e.name.ends_with(".running_var")) {
            std::fill_n(p.buffers.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, T(1));
        }
    }
    return p;
}

template <class T>
typename Adapter<T>::Batch Adapter<T>::run_f(const Batch& x, const AdapterParams<T>& params,
                                             const ForwardOptions& options, T* running, Tape* tape) const {
    const auto& w = params.weights;
    const nn::Mode mode = options.mode;
    const bool drop = mode == nn::Mode::Train && config_.dropout > 0.0;

    Batch h = conv_all(stem_, w, x);
    if (tape) {
        tape->x0 = x;
        tape->stem_conv = h;
        tape->blocks.assign(blocks_.size(), {});
    }
    h = bn(stem_bn_, w, running, h, mode, tape ? &tape->stem_bn : nullptr);
    nn::relu_inplace(h);
    if (tape) {
        tape->stem_act = h;
    }

    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
        const auto& b = blocks_[bi];
        BlockTape local;
        BlockTape& bt = tape ? tape->blocks[bi] : local;
        bt.in = h;

        Batch x1;
        if (b.type1) {
            x1 = h;
        } else {
            bt.r0 = bn(b.bn0, w, running, h, mode, &bt.bn0);
            nn::relu_inplace(bt.r0);
            if (drop) {
                bt.m0 = nn::dropout_masks(bt.r0, config_.dropout, derive_seed(options.dropout_seed, 2 * bi));
            }
            x1 = masked(bt.r0, bt.m0);
        }
        bt.c1 = conv_all(b.conv1, w, x1);
        bt.r1 = bn(b.bn1, w, running, bt.c1, mode, &bt.bn1);
        nn::relu_inplace(bt.r1);
        if (drop) {
            bt.m1 = nn::dropout_masks(bt.r1, config_.dropout, derive_seed(options.dropout_seed, 2 * bi + 1));
        }
        bt.x2 = masked(bt.r1, bt.m1);
        bt.c2 = conv_all(b.conv2, w, bt.x2);
        if (!b.type1) {
            bt.x1 = std::move(x1);
        }

        Batch out(h.size());
        bt.argmax_main.assign(h.size(), {});
        bt.argmax_skip.assign(h.size(), {});
        for (std::size_t n = 0; n < h.size(); ++n) {
            Mat<T> main = b.pool ? nn::maxpool2_forward(bt.c2[n], &bt.argmax_main[n]) : bt.c2[n];
            Mat<T> skip = b.pool ? nn::maxpool2_forward(bt.in[n], &bt.argmax_skip[n]) : bt.in[n];
            out[n] = main + pad_channels(skip, b.out_ch);
        }
        h = std::move(out);
    }

    if (tape) {
        tape->f_out = h;
    }
    h = bn(final_bn_, w, running, h, mode, tape ? &tape->final_bn : nullptr);
    nn::relu_inplace(h);
    if (tape) {
        tape->final_act = h;
    }
    h = conv_all(head_, w, h);
    if (tape) {
        tape->head = h;
    }
    for (auto& m : h) {
        m = nn::adaptive_avgpool_forward(m, config_.out_tokens);
    }
    return h;
}

template <class T>
BatchResult<T> Adapter<T>::forward_batch(const std::vector<Mat<T>>& z_c, const llm::LanguageBackbone<T>& lm,
                                         const AdapterParams<T>& params, const ForwardOptions& options,
                                         ParamVector<T>* running, Tape* tape) const {
    if (z_c.empty()) {
        throw ShapeError("adapter: empty batch");
    }
    if (params.weights.size() != layout_.weights || params.buffers.size() != layout_.buffers) {
        throw ShapeError("adapter: parameter vector does not match the layout");
    }
    if (lm.hidden() != hidden_) {
        throw ShapeError("adapter: llm hidden " + std::to_string(lm.hidden()) + " != " + std::to_string(hidden_));
    }
    if (options.mode == nn::Mode::Train && !running) {
        throw InvalidArgument("adapter: training mode needs a running-statistics buffer");
    }
    if (running && running->size() != layout_.buffers) {
        throw ShapeError("adapter: running buffer size mismatch");
    }
    T* buffers = running ? running->data() : const_cast<T*>(params.buffers.data());  // read-only in Eval

    const auto n = z_c.size();
    Batch x(n);
    Mat<T> zc_mean(static_cast<Eigen::Index>(n), feature_dim_);
    for (std::size_t i = 0; i < n; ++i) {
        if (z_c[i].rows() != context_ || z_c[i].cols() != feature_dim_) {
            throw ShapeError("adapter: encoder output is " + std::to_string(z_c[i].rows()) + "x" +
                             std::to_string(z_c[i].cols()) + ", expected " + std::to_string(context_) + "x" +
                             std::to_string(feature_dim_));
        }
        x[i] = z_c[i].transpose();
        zc_mean.row(static_cast<Eigen::Index>(i)) = z_c[i].colwise().mean();
    }
    if (tape) {
        tape->options = options;
    }

    BatchResult<T> r;
    r.z_i = run_f(x, params, options, buffers, tape);

    r.z_m.resize(static_cast<Eigen::Index>(n), hidden_);
    if (tape) {
        tape->llm.clear();
        tape->llm.resize(n);
    }
    parallel_for(n, [&](std::size_t i) {
        const Mat<T> seq = pad_features<T>(r.z_i[i].transpose(), hidden_);
        const Mat<T> states = lm.forward_embeddings(seq, tape ? &tape->llm[i] : nullptr);
        r.z_m.row(static_cast<Eigen::Index>(i)) = llm::mean_pool(states).transpose();
    });

    const auto& w = params.weights;
    Mat<T> h1 = fc_forward(fc1_, w, r.z_m);
    if (options.residual) {
        h1.noalias() += zc_mean * residual_.transpose();
    }
    Batch a1 = bn(g_bn1_, w, buffers, rows_to_batch(h1), options.mode, tape ? &tape->g_bn1 : nullptr);
    nn::relu_inplace(a1);
    const Mat<T> a1m = batch_to_rows(a1);
    const Mat<T> h2 = fc_forward(fc2_, w, a1m);
    Batch zo = bn(g_bn2_, w, buffers, rows_to_batch(h2), options.mode, tape ? &tape->g_bn2 : nullptr);
    nn::relu_inplace(zo);
    r.z_o = batch_to_rows(zo);
    r.logits = fc_forward(cls_, w, r.z_o);

    if (tape) {
        tape->z_m = r.z_m;
        tape->h1 = std::move(h1);
        tape->a1 = a1m;
        tape->h2 = h2;
        tape->z_o = r.z_o;
    }
    return r;
}

template <class T>
ParamVector<T> Adapter<T>::backward_batch(const Tape& tape, const Mat<T>& dlogits, const llm::LanguageBackbone<T>& lm,
                                          const AdapterParams<T>& params) const {
    const auto& w = params.weights;
    const auto n = static_cast<std::size_t>(dlogits.rows());
    if (n != tape.llm.size() || dlogits.cols() != config_.num_classes) {
        throw ShapeError("adapter: dlogits shape does not match the recorded batch");
    }
    ParamVector<T> grad(layout_.weights, T(0));

    // l and g.
    Mat<T> d = fc_backward(cls_, w, tape.z_o, dlogits, grad);
    d = (tape.z_o.array() > T(0)).select(d, T(0));
    d = batch_to_rows(bn_backward(g_bn2_, w, tape.g_bn2, rows_to_batch(d), grad));
    d = fc_backward(fc2_, w, tape.a1, d, grad);
    d = (tape.a1.array() > T(0)).select(d, T(0));
    d = batch_to_rows(bn_backward(g_bn1_, w, tape.g_bn1, rows_to_batch(d), grad));
    const Mat<T> d_zm = fc_backward(fc1_, w, tape.z_m, d, grad);

    // Frozen LLM: input gradient only, one sample per task.
    Batch d_zi(n);
    parallel_for(n, [&](std::size_t i) {
        const auto tokens = config_.out_tokens;
        Mat<T> d_states(tokens, hidden_);
        d_states.rowwise() = d_zm.row(static_cast<Eigen::Index>(i)) / static_cast<T>(tokens);
        const Mat<T> d_seq = lm.backward_embeddings(*tape.llm[i], d_states);
        d_zi[i] = d_seq.leftCols(config_.out_channels).transpose();
    });

    // f.
    Batch dh(n);
    for (std::size_t i = 0; i < n; ++i) {
        dh[i] = nn::adaptive_avgpool_backward(d_zi[i], f_length_);
    }
    dh = conv_all_backward(head_, w, tape.final_act, dh, grad);
    nn::relu_backward_inplace(tape.final_act, dh);
    dh = bn_backward(final_bn_, w, tape.final_bn, dh, grad);

    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
        const auto& b = blocks_[bi];
        const auto& bt = tape.blocks[bi];
        Batch d_c2(n), d_in(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto in_len = static_cast<int>(bt.in[i].cols());
            d_c2[i] = b.pool ? nn::maxpool2_backward(dh[i], bt.argmax_main[i], in_len) : dh[i];
            const Mat<T> d_skip = dh[i].topRows(b.in_ch);
            d_in[i] = b.pool ? nn::maxpool2_backward(d_skip, bt.argmax_skip[i], in_len) : d_skip;
        }
        Batch dx2 = conv_all_backward(b.conv2, w, bt.x2, d_c2, grad);
        nn::apply_masks(dx2, bt.m1);
        nn::relu_backward_inplace(bt.r1, dx2);
        Batch d_c1 = bn_backward(b.bn1, w, bt.bn1, dx2, grad);
        Batch dx1 = conv_all_backward(b.conv1, w, b.type1 ? bt.in : bt.x1, d_c1, grad);
        if (!b.type1) {
            nn::apply_masks(dx1, bt.m0);
            nn::relu_backward_inplace(bt.r0, dx1);
            dx1 = bn_backward(b.bn0, w, bt.bn0, dx1, grad);
        }
        for (std::size_t i = 0; i < n; ++i) {
            d_in[i] += dx1[i];
        }
        dh = std::move(d_in);
    }

    nn::relu_backward_inplace(tape.stem_act, dh);
    dh = bn_backward(stem_bn_, w, tape.stem_bn, dh, grad);
    for (std::size_t i = 0; i < n; ++i) {
        nn::conv1d_backward(stem_.shape, w.data() + stem_.w, tape.x0[i], dh[i], grad.data() + stem_.w,
                            grad.data() + stem_.b, static_cast<Mat<T>*>(nullptr));
    }
    return grad;
}

template <class T>
Mat<T> Adapter<T>::input_encode(const Mat<T>& z_c, const AdapterParams<T>& params) const {
    if (z_c.rows() != context_ || z_c.cols() != feature_dim_) {
        throw ShapeError("input_encode: expected " + std::to_string(context_) + "x" + std::to_string(feature_dim_) +
                         " input");
    }
    if (params.weights.size() != layout_.weights || params.buffers.size() != layout_.buffers) {
        throw ShapeError("input_encode: parameter vector does not match the layout");
    }
    Batch x{Mat<T>(z_c.transpose())};
    return run_f(x, params, {}, const_cast<T*>(params.buffers.data()), nullptr).front();
}

template <class T>
Vec<T> Adapter<T>::project(const Vec<T>& z_m, const Vec<T>& z_c_mean, const AdapterParams<T>& params) const {
    if (z_m.size() != hidden_ || z_c_mean.size() != feature_dim_) {
        throw ShapeError("project: z_m must have " + std::to_string(hidden_) + " entries and z_c_mean " +
                         std::to_string(feature_dim_));
    }
    const auto& w = params.weights;
    T* buffers = const_cast<T*>(params.buffers.data());
    Mat<T> h1 = fc_forward(fc1_, w, Mat<T>(z_m.transpose()));
    h1.noalias() += z_c_mean.transpose() * residual_.transpose();
    Batch a1 = bn(g_bn1_, w, buffers, rows_to_batch(h1), nn::Mode::Eval, nullptr);
    nn::relu_inplace(a1);
    Batch zo = bn(g_bn2_, w, buffers, rows_to_batch(fc_forward(fc2_, w, batch_to_rows(a1))), nn::Mode::Eval, nullptr);
    nn::relu_inplace(zo);
    return zo.front().col(0);
}

template <class T>
Vec<T> Adapter<T>::classify(const Vec<T>& z_o, const AdapterParams<T>& params) const {
    if (z_o.size() != config_.proj_dims.second) {
        throw ShapeError("classify: z_o must have " + std::to_string(config_.proj_dims.second) + " entries");
    }
    return fc_forward(cls_, params.weights, Mat<T>(z_o.transpose())).row(0).transpose();
}

template <class T>
Mat<T> pad_features(const Mat<T>& z_it, int hidden) {
    if (z_it.cols() > hidden) {
        throw ShapeError("pad_features: " + std::to_string(z_it.cols()) + " features exceed hidden " +
                         std::to_string(hidden));
    }
    Mat<T> out = Mat<T>::Zero(z_it.rows(), hidden);
    out.leftCols(z_it.cols()) = z_it;
    return out;
}

template <class T>
Vec<T> context_mean(const Mat<T>& z_c) {
    return z_c.colwise().mean().transpose();
}

template <class T>
ForwardResult<T> forward(std::span<const float> series, const Backbones<T>& backbones, const Adapter<T>& adapter,
                         const AdapterParams<T>& params) {
    ForwardResult<T> out;
    out.z_c = backbones.tfm.encode(series);
    const BatchResult<T> r =
        adapter.forward_batch({out.z_c.matrix.template cast<T>()}, backbones.llm, params, ForwardOptions{});
    out.logits = r.logits.row(0).transpose();
    out.z_o = r.z_o.row(0).transpose();
    return out;
}

template <class T>
Vec<T> extract_embedding(std::span<const float> series, const Backbones<T>& backbones, const Adapter<T>& adapter,
                         const AdapterParams<T>& params) {
    const auto z_c = backbones.tfm.encode(series);
    ForwardOptions options;
    options.residual = false;
    const BatchResult<T> r = adapter.forward_batch({z_c.matrix.template cast<T>()}, backbones.llm, params, options);
    return r.z_o.row(0).transpose();
}

namespace {

template <class T>
BatchResult<T> run_series(std::span<const std::vector<float>> series, const Backbones<T>& backbones,
                          const Adapter<T>& adapter, const AdapterParams<T>& params, bool residual) {
    std::vector<Mat<T>> z_c(series.size());
    parallel_for(series.size(), [&](std::size_t i) { z_c[i] = backbones.tfm.encode(series[i]).matrix.template cast<T>(); });
    ForwardOptions options;
    options.residual = residual;
    return adapter.forward_batch(z_c, backbones.llm, params, options);
}

}  // namespace

template <class T>
Mat<T> predict_batch(std::span<const std::vector<float>> series, const Backbones<T>& backbones,
                     const Adapter<T>& adapter, const AdapterParams<T>& params) {
    return run_series(series, backbones, adapter, params, true).logits;
}

template <class T>
Mat<T> embed_batch(std::span<const std::vector<float>> series, const Backbones<T>& backbones,
                   const Adapter<T>& adapter, const AdapterParams<T>& params, bool residual) {
    return run_series(series, backbones, adapter, params, residual).z_o;
}

template class Adapter<float>;
template class Adapter<double>;

#define T2L_INSTANTIATE(T)                                                                                         \
    template Mat<T> pad_features(const Mat<T>&, int);                                                             \
    template Vec<T> context_mean(const Mat<T>&);                                                                  \
    template ForwardResult<T> forward(std::span<const float>, const Backbones<T>&, const Adapter<T>&,            \
                                      const AdapterParams<T>&);                                                   \
    template Vec<T> extract_embedding(std::span<const float>, const Backbones<T>&, const Adapter<T>&,            \
                                      const AdapterParams<T>&);                                                   \
    template Mat<T> predict_batch(std::span<const std::vector<float>>, const Backbones<T>&, const Adapter<T>&,    \
                                  const AdapterParams<T>&);                                                       \
    template Mat<T> embed_batch(std::span<const std::vector<float>>, const Backbones<T>&, const Adapter<T>&,      \
                                const AdapterParams<T>&, bool);

T2L_INSTANTIATE(float)
T2L_INSTANTIATE(double)

#undef T2L_INSTANTIATE

}  // namespace t2l::adapter
