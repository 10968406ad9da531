#include "t2l/synthgen.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace t2l::synth {

namespace {

bool positive_finite(double v) {
    return std::isfinite(v) && v > 0.0;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

}  // namespace

std::string to_string(KernelKind kind) {
    switch (kind) {
        case KernelKind::Constant: return "Constant";
        case KernelKind::WhiteNoise: return "WhiteNoise";
        case KernelKind::Linear: return "Linear";
        case KernelKind::RBF: return "RBF";
        case KernelKind::RationalQuadratic: return "RationalQuadratic";
        case KernelKind::PeriodicSine: return "PeriodicSine";
    }
    return "?";
}

KernelSpec KernelSpec::constant(double c) {
    KernelSpec s;
    s.kind = KernelKind::Constant;
    s.variance = c;
    return s;
}

KernelSpec KernelSpec::white_noise(double variance) {
    KernelSpec s;
    s.kind = KernelKind::WhiteNoise;
    s.variance = variance;
    return s;
}

KernelSpec KernelSpec::linear(double variance) {
    KernelSpec s;
    s.kind = KernelKind::Linear;
    s.variance = variance;
    return s;
}

KernelSpec KernelSpec::rbf(double length_scale) {
    KernelSpec s;
    s.kind = KernelKind::RBF;
    s.length_scale = length_scale;
    return s;
}

KernelSpec KernelSpec::rational_quadratic(double length_scale, double alpha) {
    KernelSpec s;
    s.kind = KernelKind::RationalQuadratic;
    s.length_scale = length_scale;
    s.alpha = alpha;
    return s;
}

KernelSpec KernelSpec::periodic(double period, double length_scale) {
    KernelSpec s;
    s.kind = KernelKind::PeriodicSine;
    s.period = period;
    s.length_scale = length_scale;
    return s;
}

void KernelSpec::validate() const {
    bool ok = true;
    switch (kind) {
        case KernelKind::Constant:
        case KernelKind::WhiteNoise:
        case KernelKind::Linear:
            ok = positive_finite(variance);
            break;
        case KernelKind::RBF:
            ok = positive_finite(length_scale);
            break;
        case KernelKind::RationalQuadratic:
            ok = positive_finite(length_scale) && positive_finite(alpha);
            break;
        case KernelKind::PeriodicSine:
            ok = positive_finite(length_scale) && positive_finite(period);
            break;
    }
    if (!ok) {
        throw InvalidArgument("kernel " + t2l::synth::to_string(kind) + ": parameters must be positive and finite");
    }
}

// ----------------------------- expression tree -----------------------------

struct KernelExpr::Node {
    bool leaf = true;
    KernelSpec spec{};
    KernelOp op = KernelOp::Add;
    std::vector<KernelExpr> children;
};

KernelExpr::KernelExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

KernelExpr KernelExpr::leaf(KernelSpec spec) {
    spec.validate();
    auto n = std::make_shared<Node>();
    n->spec = spec;
    return KernelExpr(std::move(n));
}

KernelExpr KernelExpr::combine(KernelOp op, KernelExpr lhs, KernelExpr rhs) {
    auto n = std::make_shared<Node>();
    n->leaf = false;
    n->op = op;
    n->children = {std::move(lhs), std::move(rhs)};
    return KernelExpr(std::move(n));
}

bool KernelExpr::is_leaf() const {
    return node_->leaf;
}

const KernelSpec& KernelExpr::spec() const {
    if (!node_->leaf) {
        throw InvalidArgument("KernelExpr::spec called on a composite node");
    }
    return node_->spec;
}

KernelOp KernelExpr::op() const {
    if (node_->leaf) {
        throw InvalidArgument("KernelExpr::op called on a leaf");
    }
    return node_->op;
}

const KernelExpr& KernelExpr::lhs() const {
    if (node_->leaf) {
        throw InvalidArgument("KernelExpr::lhs called on a leaf");
    }
    return node_->children[0];
}

const KernelExpr& KernelExpr::rhs() const {
    if (node_->leaf) {
        throw InvalidArgument("KernelExpr::rhs called on a leaf");
    }
    return node_->children[1];
}

std::vector<KernelSpec> KernelExpr::leaves() const {
    if (is_leaf()) {
        return {spec()};
    }
    auto out = lhs().leaves();
    const auto right = rhs().leaves();
    out.insert(out.end(), right.begin(), right.end());
    return out;
}

std::string KernelExpr::to_string() const {
    std::ostringstream os;
    os.precision(6);
    if (is_leaf()) {
        const auto& s = spec();
        os << t2l::synth::to_string(s.kind) << '(';
        switch (s.kind) {
            case KernelKind::Constant:
            case KernelKind::WhiteNoise:
            case KernelKind::Linear: os << "v=" << s.variance; break;
            case KernelKind::RBF: os << "l=" << s.length_scale; break;
            case KernelKind::RationalQuadratic: os << "l=" << s.length_scale << ",a=" << s.alpha; break;
            case KernelKind::PeriodicSine: os << "p=" << s.period << ",l=" << s.length_scale; break;
        }
        os << ')';
    } else {
        os << '(' << lhs().to_string() << (op() == KernelOp::Add ? " + " : " * ") << rhs().to_string() << ')';
    }
    return os.str();
}

bool operator==(const KernelExpr& a, const KernelExpr& b) {
    if (a.is_leaf() != b.is_leaf()) {
        return false;
    }
    if (a.is_leaf()) {
        return a.spec() == b.spec();
    }
    return a.op() == b.op() && a.lhs() == b.lhs() && a.rhs() == b.rhs();
}

KernelExpr operator+(KernelExpr lhs, KernelExpr rhs) {
    return KernelExpr::combine(KernelOp::Add, std::move(lhs), std::move(rhs));
}

KernelExpr operator*(KernelExpr lhs, KernelExpr rhs) {
    return KernelExpr::combine(KernelOp::Mul, std::move(lhs), std::move(rhs));
}

// ----------------------------- evaluation -----------------------------

double eval_kernel(const KernelSpec& spec, double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw InvalidArgument("eval_kernel: inputs must be finite");
    }
    const double d = a - b;
    switch (spec.kind) {
        case KernelKind::Constant:
            return spec.variance;
        case KernelKind::WhiteNoise:
            return a == b ? spec.variance : 0.0;
        case KernelKind::Linear:
            return spec.variance * a * b;
        case KernelKind::RBF:
            return std::exp(-d * d / (2.0 * spec.length_scale * spec.length_scale));
        case KernelKind::RationalQuadratic:
            return std::pow(1.0 + d * d / (2.0 * spec.alpha * spec.length_scale * spec.length_scale), -spec.alpha);
        case KernelKind::PeriodicSine: {
            const double s = std::sin(std::numbers::pi * std::abs(d) / spec.period);
            return std::exp(-2.0 * s * s / (spec.length_scale * spec.length_scale));
        }
    }
    return 0.0;
}

namespace {

bool evenly_spaced(std::span<const double> grid) {
    if (grid.size() < 2) {
        return true;
    }
    const double step = grid[1] - grid[0];
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i]) || grid[i] - grid[0] != static_cast<double>(i) * step) {
            return false;
        }
    }
    return true;
}

}  // namespace

Eigen::MatrixXd eval_expr(const KernelExpr& expr, std::span<const double> grid) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    if (n == 0) {
        throw InvalidArgument("eval_expr: empty grid");
    }
    if (expr.is_leaf()) {
        Eigen::MatrixXd k(n, n);
        const KernelSpec& spec = expr.spec();
        if (spec.kind == KernelKind::Linear) {
            const Eigen::Map<const Eigen::VectorXd> g(grid.data(), n);
            if (!g.allFinite()) {
                throw InvalidArgument("eval_kernel: inputs must be finite");
            }
            k.noalias() = g * g.transpose();
            k *= spec.variance;
            return k;
        }
        if (evenly_spaced(grid)) {
            // Stationary kernel on an even grid: one value per lag.
            std::vector<double> by_lag(static_cast<std::size_t>(n));
            for (std::size_t d = 0; d < by_lag.size(); ++d) {
                by_lag[d] = eval_kernel(spec, grid[d], grid[0]);
            }
            for (Eigen::Index j = 0; j < n; ++j) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    k(i, j) = by_lag[static_cast<std::size_t>(i > j ? i - j : j - i)];
                }
            }
            return k;
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = j; i < n; ++i) {
                const double v = eval_kernel(expr.spec(), grid[static_cast<std::size_t>(i)],
                                             grid[static_cast<std::size_t>(j)]);
                k(i, j) = v;
                k(j, i) = v;
            }
        }
        return k;
    }
    Eigen::MatrixXd left = eval_expr(expr.lhs(), grid);
    const Eigen::MatrixXd right = eval_expr(expr.rhs(), grid);
    if (expr.op() == KernelOp::Add) {
        left += right;
    } else {
        left.array() *= right.array();
    }
    return left;
}

Eigen::MatrixXd jittered_covariance(const KernelExpr& expr, std::span<const double> grid, double eps) {
    Eigen::MatrixXd k = eval_expr(expr, grid);
    const double scale = k.trace() / static_cast<double>(k.rows());
    k.diagonal().array() += eps * scale;
    return k;
}

std::vector<double> sample_gp(const KernelExpr& expr, int length, std::uint64_t seed, GpSampleInfo* info) {
    if (length < 1) {
        throw InvalidArgument("sample_gp: length must be >= 1");
    }
    std::vector<double> grid(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
        grid[static_cast<std::size_t>(i)] = static_cast<double>(i);
    }
    const Eigen::MatrixXd k = eval_expr(expr, grid);
    if (!k.allFinite()) {
        throw NumericalInstability("sample_gp: covariance has non-finite entries");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(length);
    for (int i = 0; i < length; ++i) {
        z(i) = normal(rng);
    }

    const double scale = k.trace() / static_cast<double>(length);
    if (!(scale > 0.0)) {
        if (info) {
            *info = {0, 0.0};
        }
        return std::vector<double>(static_cast<std::size_t>(length), 0.0);
    }

    constexpr double kFirstJitter = 1e-6;
    constexpr double kLastJitter = 1e-2;
    for (double eps = kFirstJitter; eps <= kLastJitter * (1.0 + 1e-12); eps *= 2.0) {
        const double tol = eps * scale;
        Eigen::MatrixXd l = k;
        std::vector<lapack_int> piv(static_cast<std::size_t>(length));
        lapack_int rank = 0;
        const lapack_int status = LAPACKE_dpstrf(LAPACK_COL_MAJOR, 'L', length, l.data(), length, piv.data(), &rank, tol);
        if (status < 0) {
            throw NumericalInstability("sample_gp: dpstrf rejected argument " + std::to_string(-status));
        }
        l.triangularView<Eigen::StrictlyUpper>().setZero();
        const auto r = static_cast<Eigen::Index>(rank);
        const auto lr = l.leftCols(r);
        if (!lr.allFinite()) {
            continue;
        }

        // Variance left out by truncation must not be negative beyond the floor.
        bool indefinite = false;
        for (Eigen::Index q = r; q < length; ++q) {
            const auto orig = piv[static_cast<std::size_t>(q)] - 1;
            const double resid = k(orig, orig) - lr.row(q).squaredNorm();
            if (resid < -tol || !std::isfinite(resid)) {
                indefinite = true;
                break;
            }
        }
        if (indefinite) {
            continue;
        }

        const Eigen::VectorXd permuted = lr * z.head(r);
        std::vector<double> out(static_cast<std::size_t>(length));
        for (Eigen::Index q = 0; q < length; ++q) {
            out[static_cast<std::size_t>(piv[static_cast<std::size_t>(q)] - 1)] = permuted(q);
        }
        if (info) {
            *info = {static_cast<int>(rank), eps};
        }
        return out;
    }
    throw NumericalInstability("sample_gp: factorization failed at jitter 1e-2 for " + expr.to_string());
}

KernelExpr random_expr(std::uint64_t seed, int period, int max_nonperiodic, const KernelPriors& priors) {
    if (period <= 0) {
        throw InvalidArgument("random_expr: period must be positive");
    }
    if (max_nonperiodic < 1) {
        throw InvalidArgument("random_expr: max_nonperiodic must be >= 1");
    }
    std::mt19937_64 rng(seed);
    const int count = std::uniform_int_distribution<int>(1, max_nonperiodic)(rng);
    std::uniform_int_distribution<int> kind_dist(0, kNonPeriodicKinds - 1);

    std::vector<KernelSpec> leaves;
    leaves.reserve(static_cast<std::size_t>(count) + 1);
    for (int i = 0; i < count; ++i) {
        switch (static_cast<KernelKind>(kind_dist(rng))) {
            case KernelKind::Constant:
                leaves.push_back(KernelSpec::constant(log_uniform(rng, priors.constant_lo, priors.constant_hi)));
                break;
            case KernelKind::WhiteNoise:
                leaves.push_back(KernelSpec::white_noise(log_uniform(rng, priors.noise_lo, priors.noise_hi)));
                break;
            case KernelKind::Linear:
                leaves.push_back(KernelSpec::linear(log_uniform(rng, priors.linear_lo, priors.linear_hi)));
                break;
            case KernelKind::RBF:
                leaves.push_back(KernelSpec::rbf(log_uniform(rng, priors.rbf_lo, priors.rbf_hi)));
                break;
            case KernelKind::RationalQuadratic: {
                const double l = log_uniform(rng, priors.rq_length_lo, priors.rq_length_hi);
                const double a = log_uniform(rng, priors.rq_alpha_lo, priors.rq_alpha_hi);
                leaves.push_back(KernelSpec::rational_quadratic(l, a));
                break;
            }
            case KernelKind::PeriodicSine:
                break;
        }
    }
    const double periodic_length = log_uniform(rng, priors.periodic_length_lo, priors.periodic_length_hi);
    const auto position = std::uniform_int_distribution<int>(0, count)(rng);
    leaves.insert(leaves.begin() + position, KernelSpec::periodic(period, periodic_length));

    std::bernoulli_distribution coin(0.5);
    KernelExpr expr = KernelExpr::leaf(leaves.front());
    for (std::size_t i = 1; i < leaves.size(); ++i) {
        const KernelOp op = coin(rng) ? KernelOp::Add : KernelOp::Mul;
        expr = KernelExpr::combine(op, std::move(expr), KernelExpr::leaf(leaves[i]));
    }
    return expr;
}

// ----------------------------- datasets -----------------------------

namespace {

enum SeedStream : std::uint64_t { kSampleStream = 1, kSplitStream = 2, kExprStream = 3, kNoiseStream = 4 };

}  // namespace

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw InvalidArgument("unknown split '" + name + "' (expected train, val or test)");
}

std::vector<std::size_t> SyntheticDataset::indices(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == which) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> SyntheticDataset::class_counts() const {
    std::vector<std::size_t> counts(period_set.size(), 0);
    for (const auto& s : samples) {
        ++counts.at(static_cast<std::size_t>(s.period_class));
    }
    return counts;
}

SplitSizes split_sizes(std::size_t n) {
    SplitSizes s;
    s.train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    s.val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    s.test = n - s.train - s.val;
    return s;
}

KernelExpr sample_expr(std::uint64_t sample_seed, int period, const GenerateOptions& options) {
    return random_expr(derive_seed(sample_seed, kExprStream), period, options.max_nonperiodic, options.priors);
}

SyntheticDataset generate_dataset(int n, std::span<const int> period_set, std::uint64_t seed,
                                  const GenerateOptions& options) {
    if (period_set.empty()) {
        throw InvalidArgument("generate_dataset: period set is empty");
    }
    for (int p : period_set) {
        if (p <= 0) {
            throw InvalidArgument("generate_dataset: periods must be positive");
        }
    }
    if (n < static_cast<int>(period_set.size())) {
        throw InvalidArgument("generate_dataset: n (" + std::to_string(n) + ") is smaller than the class count (" +
                              std::to_string(period_set.size()) + ")");
    }
    if (options.length < 1) {
        throw InvalidArgument("generate_dataset: length must be >= 1");
    }

    SyntheticDataset ds;
    ds.period_set.assign(period_set.begin(), period_set.end());
    ds.master_seed = seed;
    ds.length = options.length;
    ds.max_nonperiodic = options.max_nonperiodic;
    ds.samples.resize(static_cast<std::size_t>(n));

    const auto classes = period_set.size();
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        auto& sample = ds.samples[i];
        sample.period_class = static_cast<int>(i % classes);
        sample.seed = derive_seed(seed, kSampleStream, i);
        const KernelExpr expr = sample_expr(sample.seed, period_set[i % classes], options);
        const auto draw = sample_gp(expr, options.length, derive_seed(sample.seed, kNoiseStream));
        sample.series.resize(draw.size());
        for (std::size_t t = 0; t < draw.size(); ++t) {
            sample.series[t] = static_cast<float>(draw[t]);
            if (!std::isfinite(sample.series[t])) {
                throw NumericalInstability("generate_dataset: sample " + std::to_string(i) + " is not finite");
            }
        }
    });

    // Stratified split: shuffle within each class, interleave classes round-robin, cut 70/10/20.
    std::mt19937_64 rng(derive_seed(seed, kSplitStream));
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        by_class[i % classes].push_back(i);
    }
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
    }
    std::vector<std::size_t> order;
    order.reserve(ds.samples.size());
    for (std::size_t round = 0; order.size() < ds.samples.size(); ++round) {
        for (const auto& members : by_class) {
            if (round < members.size()) {
                order.push_back(members[round]);
            }
        }
    }
    const SplitSizes sizes = split_sizes(ds.samples.size());
    ds.split.assign(ds.samples.size(), Split::Test);
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (k < sizes.train) {
            ds.split[order[k]] = Split::Train;
        } else if (k < sizes.train + sizes.val) {
            ds.split[order[k]] = Split::Val;
        }
    }
    return ds;
}

}  // namespace t2l::synth
