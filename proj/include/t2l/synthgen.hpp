#pragma once

// Gaussian-process synthetic series with an injected exact period.
//
// A series is drawn from N(0, K) where K is a left-to-right composition of
// 1..4 non-periodic base kernels and exactly one periodic (exp-sine-squared)
// kernel. The period index is the label of the pretext task.

#include "t2l/common.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace t2l::synth {

inline constexpr int kSeriesLength = 1440;
inline const std::vector<int> kDefaultPeriods{30, 60, 90, 120, 150, 180};

enum class KernelKind { Constant, WhiteNoise, Linear, RBF, RationalQuadratic, PeriodicSine };

inline constexpr int kNonPeriodicKinds = 5;

std::string to_string(KernelKind kind);

struct KernelSpec {
    KernelKind kind = KernelKind::Constant;
    double variance = 1.0;      // Constant, WhiteNoise, Linear
    double length_scale = 1.0;  // RBF, RationalQuadratic, PeriodicSine
    double alpha = 1.0;         // RationalQuadratic shape
    double period = 30.0;       // PeriodicSine, in time-steps

    static KernelSpec constant(double c);
    static KernelSpec white_noise(double variance);
    static KernelSpec linear(double variance);
    static KernelSpec rbf(double length_scale);
    static KernelSpec rational_quadratic(double length_scale, double alpha);
    static KernelSpec periodic(double period, double length_scale);

    // Throws InvalidArgument unless every parameter used by `kind` is positive and finite.
    void validate() const;

    bool operator==(const KernelSpec&) const = default;
};

enum class KernelOp { Add, Mul };

// Immutable expression tree; copies share structure.
class KernelExpr {
public:
    static KernelExpr leaf(KernelSpec spec);
    static KernelExpr combine(KernelOp op, KernelExpr lhs, KernelExpr rhs);

    bool is_leaf() const;
    const KernelSpec& spec() const;  // leaf only
    KernelOp op() const;             // node only
    const KernelExpr& lhs() const;   // node only
    const KernelExpr& rhs() const;   // node only

    // Leaves in left-to-right order.
    std::vector<KernelSpec> leaves() const;
    std::string to_string() const;

    friend bool operator==(const KernelExpr& a, const KernelExpr& b);

private:
    struct Node;
    explicit KernelExpr(std::shared_ptr<const Node> node);
    std::shared_ptr<const Node> node_;
};

KernelExpr operator+(KernelExpr lhs, KernelExpr rhs);
KernelExpr operator*(KernelExpr lhs, KernelExpr rhs);

double eval_kernel(const KernelSpec& spec, double a, double b);

// K[i][j] = expr(grid[i], grid[j]). Add sums child matrices, Mul multiplies elementwise.
Eigen::MatrixXd eval_expr(const KernelExpr& expr, std::span<const double> grid);

// K + eps * (trace(K) / n) * I.
Eigen::MatrixXd jittered_covariance(const KernelExpr& expr, std::span<const double> grid, double eps = 1e-6);

struct GpSampleInfo {
    int rank = 0;          // columns kept by the pivoted factorization
    double jitter = 0.0;   // relative floor that succeeded
};

// One draw from N(0, K) on the grid {0, ..., length-1}; deterministic in (expr, length, seed).
//
// K is factorized with a rank-revealing pivoted Cholesky, P^T K P = L L^T. Pivots
// whose remaining variance falls below eps * trace(K) / length are truncated, with
// eps doubling from 1e-6 to 1e-2 whenever the remaining Schur complement shows
// negative variance beyond that floor. Truncation keeps rows of L identical for
// identical rows of K, so exactly periodic covariances give exactly periodic samples.
std::vector<double> sample_gp(const KernelExpr& expr, int length, std::uint64_t seed,
                              GpSampleInfo* info = nullptr);

// Default hyperparameter ranges (log-uniform).
struct KernelPriors {
    double constant_lo = 0.1, constant_hi = 2.0;
    double noise_lo = 0.01, noise_hi = 0.5;
    double linear_lo = 1e-6, linear_hi = 1e-4;
    double rbf_lo = 10.0, rbf_hi = 400.0;
    double rq_length_lo = 10.0, rq_length_hi = 400.0;
    double rq_alpha_lo = 0.1, rq_alpha_hi = 10.0;
    double periodic_length_lo = 0.5, periodic_length_hi = 2.0;
};

// 1..max_nonperiodic uniformly chosen non-periodic kernels plus one PeriodicSine(period)
// at a uniformly chosen position, folded left to right with i.i.d. uniform Add/Mul.
KernelExpr random_expr(std::uint64_t seed, int period, int max_nonperiodic = 4,
                       const KernelPriors& priors = {});

// ----------------------------- datasets -----------------------------

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct SyntheticSample {
    std::vector<float> series;
    int period_class = 0;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    std::vector<int> period_set;
    std::uint64_t master_seed = 0;
    int length = kSeriesLength;
    int max_nonperiodic = 4;
    std::vector<SyntheticSample> samples;
    std::vector<Split> split;

    std::size_t size() const { return samples.size(); }
    std::vector<std::size_t> indices(Split which) const;
    std::vector<std::size_t> class_counts() const;
};

struct GenerateOptions {
    int length = kSeriesLength;
    int max_nonperiodic = 4;
    KernelPriors priors{};
};

// Periods are cycled over period_set (sample i gets class i mod K); per-sample seeds come
// from derive_seed(seed, ...); the split is a class-interleaved shuffle cut at 70/10/20.
SyntheticDataset generate_dataset(int n, std::span<const int> period_set, std::uint64_t seed,
                                  const GenerateOptions& options = {});

// The generator used for sample i of a dataset, exposed for inspection and tests.
KernelExpr sample_expr(std::uint64_t sample_seed, int period, const GenerateOptions& options = {});

struct SplitSizes {
    std::size_t train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(std::size_t n);

}  // namespace t2l::synth
