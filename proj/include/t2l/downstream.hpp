#pragma once

// Downstream evaluation: CSV ingestion with the missingness rule, subject-wise
// splits, and a regularized logistic linear probe scored by AUROC / AUPRC.

#include "t2l/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace t2l::downstream {

struct LabeledSeries {
    std::string subject_id;
    std::vector<float> series;
    int label = 0;
};

struct IngestResult {
    std::vector<LabeledSeries> records;
    std::vector<std::size_t> source_rows;  // 0-based data-row index of each retained record
    std::size_t dropped = 0;
    std::size_t total = 0;
};

// Header "subject_id,label,v0,v1,..."; empty cells are missing. A record is kept,
// with missing cells set to 0, when its missing fraction is below the threshold.
IngestResult ingest_csv(const std::filesystem::path& path, double missing_threshold = 0.25);
IngestResult parse_csv(std::istream& in, double missing_threshold = 0.25, const std::string& source = "<stream>");

struct SubjectSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Partitions subjects (not rows). round(test_fraction * subjects) subjects, at least
// one per side, go to test, allocated across subject-majority-label strata.
SubjectSplit subject_split(std::span<const std::string> subjects, std::span<const int> labels, double test_fraction,
                           std::uint64_t seed);
SubjectSplit subject_split(std::span<const LabeledSeries> data, double test_fraction, std::uint64_t seed);

enum class Penalty { None, L1, L2, ElasticNet };
std::string to_string(Penalty p);
Penalty penalty_from_string(const std::string& name);

struct HyperParams {
    Penalty penalty = Penalty::L2;
    double c = 1.0;
    double l1_ratio = 0.0;
    bool operator==(const HyperParams&) const = default;
};

struct ProbeConfig {
    double test_fraction = 0.2;
    int cv_folds = 3;
    int n_shuffles = 5;
    std::vector<double> c_values{0.1, 1.0, 10.0, 100.0};
    std::vector<Penalty> penalties{Penalty::L1, Penalty::L2, Penalty::ElasticNet, Penalty::None};
    std::vector<double> l1_ratios{0.5, 0.7, 0.9};
    int max_iter = 1000;
    double tol = 1e-6;

    void validate() const;
    std::vector<HyperParams> grid() const;
    bool operator==(const ProbeConfig&) const = default;
};

struct LogisticModel {
    Eigen::VectorXd w;
    double b = 0.0;
    Eigen::VectorXd mean, scale;  // feature standardization fitted on the training rows
    int iterations = 0;

    Eigen::VectorXd decision(const Eigen::MatrixXd& x) const;
};

// Minimizes mean log-loss + penalty / (C * n) by FISTA; the intercept is unpenalized.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y, const HyperParams& hp, int max_iter,
                           double tol);

struct ShuffleResult {
    double auroc = 0.0;
    double auprc = 0.0;
    HyperParams chosen;
    double cv_auroc = 0.0;
    std::size_t n_train = 0, n_test = 0;
    std::size_t skipped_folds = 0;
};

struct ProbeReport {
    double auroc_mean = 0.0, auroc_std = 0.0;
    double auprc_mean = 0.0, auprc_std = 0.0;
    std::vector<ShuffleResult> shuffles;
    std::vector<std::string> warnings;
};

ProbeReport probe(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                  std::span<const std::string> subjects, const ProbeConfig& config, std::uint64_t seed);

// Bundled benchmark: periodic-heavy (label 1) vs noise-heavy (label 0) series from
// the GP generator, several records per subject, with some missing cells.
struct BenchmarkOptions {
    int subjects = 200;
    int records_per_subject = 4;
    int min_length = 360;
    int max_length = 720;
    double label_agreement = 0.85;  // P(record label == subject label)
    double missing_rate = 0.15;     // fraction of records that receive gaps
};

void write_benchmark_csv(std::ostream& out, const BenchmarkOptions& options, std::uint64_t seed);

}  // namespace t2l::downstream
