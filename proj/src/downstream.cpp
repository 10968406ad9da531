#include "t2l/downstream.hpp"

#include "t2l/metrics.hpp"
#include "t2l/synthgen.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace t2l::downstream {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) {
        return {};
    }
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool parse_float(const std::string& s, float& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

IngestResult parse_csv(std::istream& in, double missing_threshold, const std::string& source) {
    if (!(missing_threshold > 0.0 && missing_threshold <= 1.0)) {
        throw InvalidArgument("ingest: missing threshold must lie in (0, 1]");
    }
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw ParseError(source + ": missing header line");
    }
    ++line_no;
    const auto header = split_fields(line);
    if (header.size() < 3 || trim(header[0]) != "subject_id" || trim(header[1]) != "label") {
        throw ParseError(source + ":1: header must start with subject_id,label and have at least one value column");
    }
    const std::size_t width = header.size() - 2;

    IngestResult result;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        const std::string where = source + ":" + std::to_string(line_no);
        if (fields.size() < 3) {
            throw ParseError(where + ": expected subject_id, label and at least one value");
        }
        if (fields.size() - 2 > width) {
            throw ParseError(where + ": more values than header columns");
        }
        LabeledSeries rec;
        rec.subject_id = trim(fields[0]);
        if (rec.subject_id.empty()) {
            throw ParseError(where + ": empty subject_id");
        }
        const std::string label = trim(fields[1]);
        if (label == "0") {
            rec.label = 0;
        } else if (label == "1") {
            rec.label = 1;
        } else {
            throw ParseError(where + ": label must be 0 or 1, got '" + label + "'");
        }
        std::size_t missing = 0;
        rec.series.reserve(fields.size() - 2);
        for (std::size_t i = 2; i < fields.size(); ++i) {
            const std::string cell = trim(fields[i]);
            if (cell.empty()) {
                ++missing;
                rec.series.push_back(0.0F);
                continue;
            }
            float v = 0.0F;
            if (!parse_float(cell, v)) {
                throw ParseError(where + ": column " + std::to_string(i + 1) + " is not a finite number: '" + cell +
                                 "'");
            }
            rec.series.push_back(v);
        }
        const double fraction = static_cast<double>(missing) / static_cast<double>(rec.series.size());
        const std::size_t row = result.total++;
        if (fraction < missing_threshold && missing < rec.series.size()) {
            result.records.push_back(std::move(rec));
            result.source_rows.push_back(row);
        } else {
            ++result.dropped;
        }
    }
    if (result.records.empty()) {
        throw EmptyDataset(source + ": no records left after the missingness filter (" +
                           std::to_string(result.dropped) + " dropped)");
    }
    return result;
}

IngestResult ingest_csv(const std::filesystem::path& path, double missing_threshold) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return parse_csv(in, missing_threshold, path.string());
}

SubjectSplit subject_split(std::span<const std::string> subjects, std::span<const int> labels, double test_fraction,
                           std::uint64_t seed) {
    if (subjects.size() != labels.size()) {
        throw ShapeError("subject_split: subjects and labels differ in length");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("subject_split: test_fraction must lie in (0, 1)");
    }
    std::map<std::string, std::pair<long, long>> votes;  // ordered: deterministic subject order
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        auto& v = votes[subjects[i]];
        (labels[i] == 1 ? v.second : v.first) += 1;
    }
    if (votes.size() < 2) {
        throw InvalidArgument("subject_split: need at least 2 subjects, got " + std::to_string(votes.size()));
    }

    std::array<std::vector<std::string>, 2> strata;
    for (const auto& [id, v] : votes) {
        strata[v.second > v.first ? 1 : 0].push_back(id);
    }
    const auto total = static_cast<long>(votes.size());
    const long n_test = std::clamp<long>(std::lround(test_fraction * static_cast<double>(total)), 1, total - 1);

    // Largest-remainder allocation of test subjects across strata.
    std::array<long, 2> quota{};
    std::array<double, 2> remainder{};
    long assigned = 0;
    for (int s = 0; s < 2; ++s) {
        const double exact = static_cast<double>(n_test) * static_cast<double>(strata[s].size()) / static_cast<double>(total);
        quota[s] = static_cast<long>(std::floor(exact));
        remainder[s] = exact - static_cast<double>(quota[s]);
        assigned += quota[s];
    }
    while (assigned < n_test) {
        const int s = remainder[1] > remainder[0] ? 1 : 0;
        const int pick = quota[s] < static_cast<long>(strata[s].size()) ? s : 1 - s;
        ++quota[pick];
        remainder[pick] = -1.0;
        ++assigned;
    }

    std::mt19937_64 rng(seed);
    std::set<std::string> test_subjects;
    for (int s = 0; s < 2; ++s) {
        std::shuffle(strata[s].begin(), strata[s].end(), rng);
        for (long i = 0; i < quota[s]; ++i) {
            test_subjects.insert(strata[s][static_cast<std::size_t>(i)]);
        }
    }
    SubjectSplit out;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        (test_subjects.contains(subjects[i]) ? out.test : out.train).push_back(i);
    }
    return out;
}

SubjectSplit subject_split(std::span<const LabeledSeries> data, double test_fraction, std::uint64_t seed) {
    std::vector<std::string> subjects;
    std::vector<int> labels;
    for (const auto& r : data) {
        subjects.push_back(r.subject_id);
        labels.push_back(r.label);
    }
    return subject_split(subjects, labels, test_fraction, seed);
}

std::string to_string(Penalty p) {
    switch (p) {
    case Penalty::None:
        return "none";
    case Penalty::L1:
        return "l1";
    case Penalty::L2:
        return "l2";
    case Penalty::ElasticNet:
        return "elasticnet";
    }
    return "?";
}

Penalty penalty_from_string(const std::string& name) {
    for (Penalty p : {Penalty::None, Penalty::L1, Penalty::L2, Penalty::ElasticNet}) {
        if (to_string(p) == name) {
            return p;
        }
    }
    throw InvalidArgument("unknown penalty '" + name + "' (expected none, l1, l2 or elasticnet)");
}

void ProbeConfig::validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("probe.test_fraction must lie in (0, 1)");
    }
    if (cv_folds < 2) {
        throw InvalidArgument("probe.cv_folds must be >= 2");
    }
    if (n_shuffles < 1) {
        throw InvalidArgument("probe.n_shuffles must be >= 1");
    }
    if (penalties.empty()) {
        throw InvalidArgument("probe.penalties must not be empty");
    }
    for (double c : c_values) {
        if (!(c > 0.0)) {
            throw InvalidArgument("probe.c_values must be positive");
        }
    }
    for (double r : l1_ratios) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw InvalidArgument("probe.l1_ratios must lie in [0, 1]");
        }
    }
    if (max_iter < 1 || !(tol > 0.0)) {
        throw InvalidArgument("probe.max_iter must be >= 1 and probe.tol positive");
    }
}

std::vector<HyperParams> ProbeConfig::grid() const {
    std::vector<HyperParams> g;
    for (Penalty p : penalties) {
        if (p == Penalty::None) {
            g.push_back({p, 1.0, 0.0});
            continue;
        }
        if (c_values.empty()) {
            throw InvalidArgument("probe.c_values must not be empty for penalized models");
        }
        for (double c : c_values) {
            if (p == Penalty::ElasticNet) {
                for (double r : l1_ratios) {
                    g.push_back({p, c, r});
                }
            } else {
                g.push_back({p, c, p == Penalty::L1 ? 1.0 : 0.0});
            }
        }
    }
    return g;
}

Eigen::VectorXd LogisticModel::decision(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd z = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    return (z * w).array() + b;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y, const HyperParams& hp, int max_iter,
                           double tol) {
    const auto n = x.rows();
    const auto d = x.cols();
    if (n < 1 || static_cast<std::size_t>(n) != y.size()) {
        throw ShapeError("fit_logistic: need one label per row");
    }
    LogisticModel m;
    m.mean = x.colwise().mean().transpose();
    m.scale = ((x.rowwise() - m.mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (m.scale(j) < 1e-12) {
            m.scale(j) = 1.0;
        }
    }
    const Eigen::MatrixXd z = (x.rowwise() - m.mean.transpose()).array().rowwise() / m.scale.transpose().array();
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        t(i) = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
    }

    const double lambda = hp.penalty == Penalty::None ? 0.0 : 1.0 / (hp.c * static_cast<double>(n));
    const double ratio = hp.penalty == Penalty::L1 ? 1.0 : (hp.penalty == Penalty::ElasticNet ? hp.l1_ratio : 0.0);
    const double l1 = lambda * ratio;
    const double l2 = lambda * (1.0 - ratio);

    // Lipschitz constant of the smooth part: ||[Z 1]||^2 / (4n) + l2, by power iteration.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1) / std::sqrt(static_cast<double>(d + 1));
    double sigma = 0.0;
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd u = z * v.head(d) + Eigen::VectorXd::Constant(n, v(d));
        Eigen::VectorXd nv(d + 1);
        nv.head(d) = z.transpose() * u;
        nv(d) = u.sum();
        sigma = nv.norm();
        if (sigma == 0.0) {
            break;
        }
        v = nv / sigma;
    }
    const double lip = sigma / (4.0 * static_cast<double>(n)) + l2 + 1e-12;
    const double step = 1.0 / lip;

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d), w_prev = w, yw = w;
    double b = 0.0, b_prev = 0.0, yb = 0.0, tk = 1.0;
    int it = 0;
    for (; it < max_iter; ++it) {
        const Eigen::VectorXd p = (-(z * yw).array() - yb).exp().unaryExpr([](double e) { return 1.0 / (1.0 + e); });
        const Eigen::VectorXd r = (p - t) / static_cast<double>(n);
        const Eigen::VectorXd gw = z.transpose() * r + l2 * yw;
        const double gb = r.sum();

        w_prev = w;
        b_prev = b;
        w = yw - step * gw;
        b = yb - step * gb;
        if (l1 > 0.0) {
            const double thr = step * l1;
            w = w.unaryExpr([thr](double a) { return std::copysign(std::max(std::abs(a) - thr, 0.0), a); });
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        const double mom = (tk - 1.0) / t_next;
        yw = w + mom * (w - w_prev);
        yb = b + mom * (b - b_prev);
        tk = t_next;

        const double change = std::sqrt((w - w_prev).squaredNorm() + (b - b_prev) * (b - b_prev));
        const double size = std::max(1.0, std::sqrt(w.squaredNorm() + b * b));
        if (change < tol * size) {
            ++it;
            break;
        }
    }
    m.w = w;
    m.b = b;
    m.iterations = it;
    return m;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

std::vector<int> take(std::span<const int> y, std::span<const std::size_t> rows) {
    std::vector<int> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[i] = y[rows[i]];
    }
    return out;
}

bool both_classes(std::span<const int> y) {
    const bool has1 = std::find(y.begin(), y.end(), 1) != y.end();
    const bool has0 = std::find(y.begin(), y.end(), 0) != y.end();
    return has0 && has1;
}

// Stratified k-fold over rows, shuffled from seed.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> y, int k, std::uint64_t seed) {
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < y.size(); ++i) {
        by_class[y[i] == 1 ? 1 : 0].push_back(i);
    }
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t next = 0;
    for (auto& rows : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t r : rows) {
            folds[next % folds.size()].push_back(r);
            ++next;
        }
    }
    for (auto& f : folds) {
        std::sort(f.begin(), f.end());
    }
    return folds;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

ProbeReport probe(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                  std::span<const std::string> subjects, const ProbeConfig& config, std::uint64_t seed) {
    config.validate();
    if (static_cast<std::size_t>(embeddings.rows()) != labels.size() || subjects.size() != labels.size()) {
        throw ShapeError("probe: embeddings, labels and subjects must have the same row count");
    }
    const auto grid = config.grid();
    ProbeReport report;
    std::vector<double> aurocs, auprcs;

    for (int s = 0; s < config.n_shuffles; ++s) {
        const auto shuffle_seed = derive_seed(seed, 1, static_cast<std::uint64_t>(s));
        const auto split = subject_split(subjects, labels, config.test_fraction, shuffle_seed);
        {
            std::set<std::string> train_ids;
            for (std::size_t i : split.train) {
                train_ids.insert(subjects[i]);
            }
            for (std::size_t i : split.test) {
                if (train_ids.contains(subjects[i])) {
                    throw Error("probe: subject " + subjects[i] + " appears on both sides of the split");
                }
            }
        }
        const Eigen::MatrixXd x_train = take_rows(embeddings, split.train);
        const Eigen::MatrixXd x_test = take_rows(embeddings, split.test);
        const auto y_train = take(labels, split.train);
        const auto y_test = take(labels, split.test);
        if (!both_classes(y_test)) {
            report.warnings.push_back("shuffle " + std::to_string(s) + ": hold-out set has a single class, skipped");
            continue;
        }

        const auto folds = stratified_folds(y_train, config.cv_folds, derive_seed(shuffle_seed, 2));
        ShuffleResult sr;
        std::vector<std::vector<double>> scores(grid.size());
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::vector<std::size_t> fit_rows;
            for (std::size_t g = 0; g < folds.size(); ++g) {
                if (g != f) {
                    fit_rows.insert(fit_rows.end(), folds[g].begin(), folds[g].end());
                }
            }
            std::sort(fit_rows.begin(), fit_rows.end());
            const auto y_fit = take(y_train, fit_rows);
            const auto y_val = take(y_train, folds[f]);
            if (!both_classes(y_fit) || !both_classes(y_val)) {
                ++sr.skipped_folds;
                report.warnings.push_back("shuffle " + std::to_string(s) + ", fold " + std::to_string(f) +
                                          ": single-class fold skipped");
                continue;
            }
            const Eigen::MatrixXd x_fit = take_rows(x_train, fit_rows);
            const Eigen::MatrixXd x_val = take_rows(x_train, folds[f]);
            for (std::size_t h = 0; h < grid.size(); ++h) {
                const auto model = fit_logistic(x_fit, y_fit, grid[h], config.max_iter, config.tol);
                const Eigen::VectorXd sc = model.decision(x_val);
                scores[h].push_back(metrics::auroc(std::span<const double>(sc.data(), static_cast<std::size_t>(sc.size())), y_val));
            }
        }
        if (sr.skipped_folds == folds.size()) {
            report.warnings.push_back("shuffle " + std::to_string(s) + ": every CV fold was single-class");
            continue;
        }
        std::size_t best = 0;
        double best_score = -1.0;
        for (std::size_t h = 0; h < grid.size(); ++h) {
            const double m = mean_of(scores[h]);
            if (m > best_score) {
                best_score = m;
                best = h;
            }
        }
        if (!both_classes(y_train)) {
            report.warnings.push_back("shuffle " + std::to_string(s) + ": training side has a single class, skipped");
            continue;
        }
        const auto model = fit_logistic(x_train, y_train, grid[best], config.max_iter, config.tol);
        const Eigen::VectorXd sc = model.decision(x_test);
        const std::span<const double> scores_test(sc.data(), static_cast<std::size_t>(sc.size()));
        sr.auroc = metrics::auroc(scores_test, y_test);
        sr.auprc = metrics::auprc(scores_test, y_test);
        sr.chosen = grid[best];
        sr.cv_auroc = best_score;
        sr.n_train = split.train.size();
        sr.n_test = split.test.size();
        aurocs.push_back(sr.auroc);
        auprcs.push_back(sr.auprc);
        report.shuffles.push_back(sr);
    }
    if (report.shuffles.empty()) {
        throw DegenerateLabels("probe: every shuffle was skipped for single-class data");
    }
    report.auroc_mean = mean_of(aurocs);
    report.auroc_std = pop_std(aurocs);
    report.auprc_mean = mean_of(auprcs);
    report.auprc_std = pop_std(auprcs);
    return report;
}

void write_benchmark_csv(std::ostream& out, const BenchmarkOptions& options, std::uint64_t seed) {
    if (options.subjects < 2 || options.records_per_subject < 1 || options.min_length < 16 ||
        options.max_length < options.min_length) {
        throw InvalidArgument("benchmark: need >= 2 subjects, >= 1 record each and 16 <= min_length <= max_length");
    }
    const auto& periods = synth::kDefaultPeriods;
    const int n = options.subjects * options.records_per_subject;
    std::vector<std::vector<float>> series(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    std::vector<int> subject_label(static_cast<std::size_t>(options.subjects));
    for (int s = 0; s < options.subjects; ++s) {
        subject_label[static_cast<std::size_t>(s)] = s % 2;
    }

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const auto subject = static_cast<std::size_t>(i) / static_cast<std::size_t>(options.records_per_subject);
        std::mt19937_64 rng(derive_seed(seed, 1, i));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int y = unit(rng) < options.label_agreement ? subject_label[subject] : 1 - subject_label[subject];
        const int length = std::uniform_int_distribution<int>(options.min_length, options.max_length)(rng);
        const int period = periods[std::uniform_int_distribution<std::size_t>(0, periods.size() - 1)(rng)];
        const double ell = std::exp(std::uniform_real_distribution<double>(std::log(0.5), std::log(2.0))(rng));
        const double rbf_len = std::exp(std::uniform_real_distribution<double>(std::log(20.0), std::log(200.0))(rng));

        // Periodic-heavy: strong periodic component over mild noise; noise-heavy: the reverse.
        const double periodic_var = y == 1 ? 1.0 : 0.15;
        const double noise_var = y == 1 ? 0.15 : 1.0;
        using synth::KernelExpr;
        using synth::KernelSpec;
        const KernelExpr expr = KernelExpr::leaf(KernelSpec::constant(periodic_var)) *
                                    KernelExpr::leaf(KernelSpec::periodic(period, ell)) +
                                KernelExpr::leaf(KernelSpec::white_noise(noise_var)) +
                                KernelExpr::leaf(KernelSpec::constant(0.5 * noise_var)) *
                                    KernelExpr::leaf(KernelSpec::rbf(rbf_len));
        const auto x = synth::sample_gp(expr, length, derive_seed(seed, 2, i));
        series[i].assign(x.begin(), x.end());
        labels[i] = y;
    });

    const int width = options.max_length;
    out << "subject_id,label";
    for (int j = 0; j < width; ++j) {
        out << ",v" << j;
    }
    out << '\n';
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        std::mt19937_64 rng(derive_seed(seed, 3, idx));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const auto len = series[idx].size();
        std::vector<bool> gap(len, false);
        if (unit(rng) < options.missing_rate) {
            // Half of the gapped records stay under the drop threshold, half exceed it.
            const double frac = unit(rng) < 0.5 ? 0.1 : 0.35;
            const auto count = static_cast<std::size_t>(frac * static_cast<double>(len));
            const auto start = std::uniform_int_distribution<std::size_t>(0, len - count)(rng);
            std::fill_n(gap.begin() + static_cast<std::ptrdiff_t>(start), count, true);
        }
        out << "s" << (i / options.records_per_subject) << ',' << labels[idx];
        char buf[32];
        for (std::size_t t = 0; t < len; ++t) {
            out << ',';
            if (!gap[t]) {
                const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), series[idx][t]);
                out.write(buf, ptr - buf);
            }
        }
        out << '\n';
    }
}

}  // namespace t2l::downstream
