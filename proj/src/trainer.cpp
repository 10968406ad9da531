#include "t2l/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <cmath>
#include <random>

namespace t2l::trainer {

using adapter::AdapterParams;
using adapter::Group;

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw InvalidArgument("trainer.epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw InvalidArgument("trainer.batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0 && std::isfinite(learning_rate))) {
        throw InvalidArgument("trainer.learning_rate must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
        throw InvalidArgument("trainer: adam betas must lie in [0, 1) and eps must be positive");
    }
    if (eval_every < 1) {
        throw InvalidArgument("trainer.eval_every must be >= 1");
    }
    if (clip_norm < 0.0) {
        throw InvalidArgument("trainer.clip_norm must be >= 0");
    }
}

template <class T>
double cross_entropy(const Mat<T>& logits, std::span<const int> labels, Mat<T>* grad) {
    const auto n = logits.rows();
    if (n < 1 || static_cast<std::size_t>(n) != labels.size()) {
        throw ShapeError("cross_entropy: need one label per logit row");
    }
    const auto k = logits.cols();
    if (grad) {
        grad->resize(n, k);
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= k) {
            throw InvalidArgument("cross_entropy: label " + std::to_string(y) + " outside 0.." + std::to_string(k - 1));
        }
        const Eigen::RowVectorXd row = logits.row(i).template cast<double>();
        const double mx = row.maxCoeff();
        const double lse = mx + std::log((row.array() - mx).exp().sum());
        total += lse - row(y);
        if (grad) {
            Eigen::RowVectorXd p = (row.array() - lse).exp();
            p(y) -= 1.0;
            grad->row(i) = (p / static_cast<double>(n)).template cast<T>();
        }
    }
    return total / static_cast<double>(n);
}

template double cross_entropy(const Mat<float>&, std::span<const int>, Mat<float>*);
template double cross_entropy(const Mat<double>&, std::span<const int>, Mat<double>*);

Adam::Adam(std::size_t size, const TrainConfig& config)
    : lr_(config.learning_rate), b1_(config.beta1), b2_(config.beta2), eps_(config.adam_eps), m_(size, 0.0F),
      v_(size, 0.0F) {}

void Adam::step(std::span<float> params, std::span<const float> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
        throw ShapeError("adam: parameter / gradient size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const auto b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
    const auto step = static_cast<float>(lr_ / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const auto eps = static_cast<float>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0F - b1) * grad[i];
        v_[i] = b2 * v_[i] + (1.0F - b2) * grad[i] * grad[i];
        params[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
}

std::vector<Mat<float>> encode_rows(const tfm::TimeSeriesEncoder& encoder, const synth::SyntheticDataset& ds,
                                    std::span<const std::size_t> rows) {
    std::vector<Mat<float>> out(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) { out[i] = encoder.encode(ds.samples[rows[i]].series).matrix; });
    return out;
}

namespace {

constexpr int kEvalBatch = 64;

struct Evaluated {
    Mat<float> logits;
    std::vector<int> labels;
};

Evaluated run_eval(const AdapterParams<float>& params, const std::vector<Mat<float>>& z_c, std::span<const int> labels,
                   const adapter::Adapter<float>& model, const llm::LanguageBackbone<float>& lm) {
    Evaluated e;
    e.logits.resize(static_cast<Eigen::Index>(z_c.size()), model.config().num_classes);
    e.labels.assign(labels.begin(), labels.end());
    for (std::size_t start = 0; start < z_c.size(); start += kEvalBatch) {
        const std::size_t end = std::min(z_c.size(), start + kEvalBatch);
        const std::vector<Mat<float>> chunk(z_c.begin() + static_cast<std::ptrdiff_t>(start),
                                            z_c.begin() + static_cast<std::ptrdiff_t>(end));
        const auto r = model.forward_batch(chunk, lm, params, adapter::ForwardOptions{});
        e.logits.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = r.logits;
    }
    return e;
}

std::vector<int> labels_of(const synth::SyntheticDataset& ds, std::span<const std::size_t> rows) {
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y[i] = ds.samples[rows[i]].period_class;
    }
    return y;
}

bool all_finite(const ParamVector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace

PretextReport summarize_predictions(const Mat<float>& logits, std::span<const int> labels, int num_classes) {
    PretextReport r;
    r.count = labels.size();
    r.confusion.assign(static_cast<std::size_t>(num_classes), std::vector<long>(static_cast<std::size_t>(num_classes), 0));
    if (labels.empty()) {
        return r;
    }
    r.loss = cross_entropy(logits, labels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Eigen::Index pred = 0;
        logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
        ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred)];
        correct += pred == labels[i] ? 1 : 0;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    return r;
}

PretextReport evaluate_pretext(const AdapterParams<float>& params, const synth::SyntheticDataset& ds,
                               synth::Split split, const adapter::Backbones<float>& backbones,
                               const adapter::Adapter<float>& model) {
    const auto rows = ds.indices(split);
    if (rows.empty()) {
        throw EmptyDataset("evaluate_pretext: split " + synth::to_string(split) + " is empty");
    }
    const auto y = labels_of(ds, rows);
    PretextReport report;
    report.count = rows.size();
    const int k = model.config().num_classes;
    Mat<float> logits(static_cast<Eigen::Index>(rows.size()), k);
    // Encode in chunks so a large split never holds every embedding at once.
    constexpr std::size_t kChunk = 512;
    for (std::size_t start = 0; start < rows.size(); start += kChunk) {
        const std::size_t end = std::min(rows.size(), start + kChunk);
        const std::span<const std::size_t> part(rows.data() + start, end - start);
        const auto z_c = encode_rows(backbones.tfm, ds, part);
        const auto e = run_eval(params, z_c, std::span<const int>(y.data() + start, end - start), model, backbones.llm);
        logits.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = e.logits;
    }
    return summarize_predictions(logits, y, k);
}

FitResult fit(const synth::SyntheticDataset& ds, const adapter::Backbones<float>& backbones,
              const adapter::Adapter<float>& model, const TrainConfig& config, const EpochSink& sink,
              const AdapterParams<float>* init) {
    config.validate();
    const auto train_rows = ds.indices(synth::Split::Train);
    const auto val_rows = ds.indices(synth::Split::Val);
    if (train_rows.empty() || val_rows.empty()) {
        throw EmptyDataset("fit: train and validation splits must be non-empty");
    }
    for (const auto& s : ds.samples) {
        if (s.period_class < 0 || s.period_class >= model.config().num_classes) {
            throw InvalidArgument("fit: dataset has more period classes than the adapter's output head");
        }
    }

    const auto train_z = encode_rows(backbones.tfm, ds, train_rows);
    const auto val_z = encode_rows(backbones.tfm, ds, val_rows);
    const auto train_y = labels_of(ds, train_rows);
    const auto val_y = labels_of(ds, val_rows);

    AdapterParams<float> params = init ? *init : model.initial_params();
    Adam adam(params.weights.size(), config);

    FitResult result;
    auto& metrics = result.metrics;
    {
        const auto e = run_eval(params, val_z, val_y, model, backbones.llm);
        metrics.initial_val_loss = cross_entropy(e.logits, e.labels);
    }
    metrics.best_val_loss = std::numeric_limits<double>::infinity();
    result.params = params;
    AdapterParams<float> last_good = params;

    const auto batch = static_cast<std::size_t>(config.batch_size);
    std::vector<std::size_t> order(train_rows.size());
    long step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(config.seed, 10, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        // Cut into batches; a trailing singleton joins the previous batch so that
        // batch statistics are always defined.
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (std::size_t s = 0; s < order.size(); s += batch) {
            spans.emplace_back(s, std::min(order.size(), s + batch));
        }
        if (spans.size() > 1 && spans.back().second - spans.back().first == 1) {
            spans[spans.size() - 2].second = spans.back().second;
            spans.pop_back();
        }

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (const auto& [lo, hi] : spans) {
            std::vector<Mat<float>> z(hi - lo);
            std::vector<int> y(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                z[i - lo] = train_z[order[i]];
                y[i - lo] = train_y[order[i]];
            }
            adapter::ForwardOptions options;
            options.mode = nn::Mode::Train;
            options.dropout_seed = derive_seed(config.seed, 11, static_cast<std::uint64_t>(step));
            adapter::Adapter<float>::Tape tape;
            const auto r = model.forward_batch(z, backbones.llm, params, options, &params.buffers, &tape);
            Mat<float> dlogits;
            const double loss = cross_entropy(r.logits, y, &dlogits);
            if (!std::isfinite(loss)) {
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                           std::to_string(step),
                                       last_good);
            }
            if (step == 0) {
                metrics.initial_train_loss = loss;
            }
            auto grad = model.backward_batch(tape, dlogits, backbones.llm, params);
            if (config.clip_norm > 0.0) {
                double norm = 0.0;
                for (float g : grad) {
                    norm += static_cast<double>(g) * g;
                }
                norm = std::sqrt(norm);
                if (norm > config.clip_norm) {
                    const auto s = static_cast<float>(config.clip_norm / norm);
                    for (float& g : grad) {
                        g *= s;
                    }
                }
            }
            adam.step(params.weights, grad);
            if (!all_finite(params.weights) || !all_finite(params.buffers)) {
                throw TrainingDiverged("parameters became non-finite at step " + std::to_string(step), last_good);
            }
            last_good = params;
            loss_sum += loss * static_cast<double>(hi - lo);
            loss_count += hi - lo;
            ++step;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(loss_count);
        if (epoch % config.eval_every == 0 || epoch == config.epochs) {
            const auto e = run_eval(params, val_z, val_y, model, backbones.llm);
            const auto summary = summarize_predictions(e.logits, e.labels, model.config().num_classes);
            rec.val_loss = summary.loss;
            rec.val_accuracy = summary.accuracy;
            rec.evaluated = true;
            if (rec.val_loss < metrics.best_val_loss) {
                metrics.best_val_loss = rec.val_loss;
                metrics.best_epoch = epoch;
                result.params = params;
            }
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        metrics.epochs.push_back(rec);
        if (sink) {
            sink(rec);
        }
    }
    return result;
}

std::size_t GradCheckReport::count(Group g) const {
    return static_cast<std::size_t>(
        std::count_if(checked.begin(), checked.end(), [g](const GradCheckEntry& e) { return e.group == g; }));
}

namespace {

// ReLU on/off states and max-pool winners: the loss is smooth in a parameter as
// long as this pattern stays fixed.
std::vector<std::uint8_t> activation_pattern(const adapter::Adapter<double>::Tape& t) {
    std::vector<std::uint8_t> out;
    auto add = [&](const Mat<double>& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            out.push_back(m.data()[i] > 0.0 ? 1 : 0);
        }
    };
    auto add_batch = [&](const std::vector<Mat<double>>& b) {
        for (const auto& m : b) {
            add(m);
        }
    };
    auto add_argmax = [&](const std::vector<std::vector<int>>& a) {
        for (const auto& v : a) {
            for (int k : v) {
                out.push_back(static_cast<std::uint8_t>(k & 1));
            }
        }
    };
    add_batch(t.stem_act);
    for (const auto& b : t.blocks) {
        add_batch(b.r0);
        add_batch(b.r1);
        add_argmax(b.argmax_main);
        add_argmax(b.argmax_skip);
    }
    add_batch(t.final_act);
    add(t.a1);
    add(t.z_o);
    return out;
}

}  // namespace

GradCheckReport gradient_check(const AdapterParams<double>& params, const Mat<double>& z_c, int label,
                               const adapter::Adapter<double>& model, const llm::LanguageBackbone<double>& lm,
                               double tolerance, std::uint64_t seed, std::size_t per_group) {
    constexpr double kStep = 1e-5;
    constexpr double kFloor = 1e-7;   // denominator floor for relative error
    constexpr double kZero = 1e-12;   // both gradients below this: no path to the loss

    const std::vector<Mat<double>> batch{z_c};
    const std::vector<int> labels{label};
    std::vector<std::uint8_t> base_pattern;
    bool kink = false;
    auto loss_at = [&](const AdapterParams<double>& p) {
        adapter::Adapter<double>::Tape t;
        const auto r = model.forward_batch(batch, lm, p, adapter::ForwardOptions{}, nullptr, &t);
        kink = kink || activation_pattern(t) != base_pattern;
        return cross_entropy(r.logits, labels);
    };

    adapter::Adapter<double>::Tape tape;
    const auto r = model.forward_batch(batch, lm, params, adapter::ForwardOptions{}, nullptr, &tape);
    Mat<double> dlogits;
    cross_entropy(r.logits, labels, &dlogits);
    const auto analytic = model.backward_batch(tape, dlogits, lm, params);
    base_pattern = activation_pattern(tape);

    GradCheckReport report;
    report.tolerance = tolerance;
    std::mt19937_64 rng(seed);
    AdapterParams<double> probe = params;
    for (const Group g : {Group::F, Group::G, Group::L}) {
        std::vector<std::size_t> pool;
        for (const auto& e : model.layout().entries) {
            if (e.group == g) {
                for (std::size_t i = 0; i < e.size; ++i) {
                    pool.push_back(e.offset + i);
                }
            }
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        std::size_t taken = 0;
        for (std::size_t idx : pool) {
            if (taken == per_group) {
                break;
            }
            const double theta = params.weights[idx];
            const double h = kStep * std::max(std::abs(theta), 1.0);
            kink = false;
            auto diff = [&](double step) {
                probe.weights[idx] = theta + step;
                const double up = loss_at(probe);
                probe.weights[idx] = theta - step;
                const double down = loss_at(probe);
                probe.weights[idx] = theta;
                return up - down;
            };
            // Fourth-order central stencil: the h^2 error term cancels.
            const double numeric = (8.0 * diff(h) - diff(2.0 * h)) / (12.0 * h);
            const double a = analytic[idx];
            if (kink) {
                ++report.excluded_kink;
                continue;
            }
            if (std::abs(a) < kZero && std::abs(numeric) < kZero) {
                ++report.excluded_zero;
                continue;
            }
            GradCheckEntry entry{idx, g, a, numeric,
                                 std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor})};
            report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
            report.checked.push_back(entry);
            ++taken;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace t2l::trainer
