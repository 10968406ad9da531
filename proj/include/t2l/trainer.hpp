#pragma once

// Pretext training: classify the injected period with cross-entropy and Adam
// over the adapter parameters only. Backbones are held by const reference.
//
// Reduction order: the per-batch gradient is a serial sum over samples in batch
// order; only the frozen-LLM passes run concurrently and each writes its own
// slot, so results do not depend on the worker count.

#include "t2l/adapter.hpp"
#include "t2l/synthgen.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace t2l::trainer {

struct TrainConfig {
    int epochs = 25;
    int batch_size = 16;
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int eval_every = 1;
    double clip_norm = 0.0;  // 0 disables clipping

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double seconds = 0.0;
    bool evaluated = false;
};

struct TrainMetrics {
    double initial_val_loss = 0.0;
    double initial_train_loss = 0.0;  // first batch, before any update
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

// Mean negative log-softmax of the true class. Writes dL/dlogits when grad is set.
template <class T>
double cross_entropy(const Mat<T>& logits, std::span<const int> labels, Mat<T>* grad = nullptr);

class Adam {
public:
    Adam(std::size_t size, const TrainConfig& config);
    void step(std::span<float> params, std::span<const float> grad);
    std::size_t state_size() const { return m_.size(); }
    long steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<float> m_, v_;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, adapter::AdapterParams<float> last_good)
        : Error(what), last_good_(std::move(last_good)) {}
    const adapter::AdapterParams<float>& last_good() const { return last_good_; }

private:
    adapter::AdapterParams<float> last_good_;
};

struct FitResult {
    adapter::AdapterParams<float> params;  // best validation loss
    TrainMetrics metrics;
};

using EpochSink = std::function<void(const EpochRecord&)>;

// Encoder outputs for the given dataset rows, computed in parallel.
std::vector<Mat<float>> encode_rows(const tfm::TimeSeriesEncoder& encoder, const synth::SyntheticDataset& ds,
                                    std::span<const std::size_t> rows);

FitResult fit(const synth::SyntheticDataset& ds, const adapter::Backbones<float>& backbones,
              const adapter::Adapter<float>& model, const TrainConfig& config, const EpochSink& sink = {},
              const adapter::AdapterParams<float>* init = nullptr);

struct PretextReport {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::vector<long>> confusion;  // [true][predicted]
    std::size_t count = 0;
};

PretextReport summarize_predictions(const Mat<float>& logits, std::span<const int> labels, int num_classes);

PretextReport evaluate_pretext(const adapter::AdapterParams<float>& params, const synth::SyntheticDataset& ds,
                               synth::Split split, const adapter::Backbones<float>& backbones,
                               const adapter::Adapter<float>& model);

struct GradCheckEntry {
    std::size_t index = 0;
    adapter::Group group = adapter::Group::F;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> checked;
    std::size_t excluded_zero = 0;  // no path to the loss: both gradients vanish
    std::size_t excluded_kink = 0;  // a ReLU or max-pool switches inside the stencil
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::size_t count(adapter::Group g) const;
};

// Fourth-order central differences (step h = 1e-5 * max(|theta|, 1), points +-h, +-2h) on one sample, eval-mode BN,
// for per_group parameters drawn from each of f, g and l. Parameters whose stencil
// crosses a ReLU or max-pool switch are counted in excluded_kink and not compared.
GradCheckReport gradient_check(const adapter::AdapterParams<double>& params, const Mat<double>& z_c, int label,
                               const adapter::Adapter<double>& model, const llm::LanguageBackbone<double>& lm,
                               double tolerance, std::uint64_t seed, std::size_t per_group = 80);

}  // namespace t2l::trainer
