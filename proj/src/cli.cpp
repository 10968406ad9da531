#include "t2l/cli.hpp"

#include "t2l/analysis.hpp"
#include "t2l/checkpoint.hpp"
#include "t2l/config.hpp"
#include "t2l/dataset_io.hpp"
#include "t2l/downstream.hpp"
#include "t2l/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace t2l::cli {

namespace fs = std::filesystem;
using config::json;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct ConfigOptions {
    std::string config_path;
    std::string preset = "desk";
    std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* cmd, ConfigOptions& o) {
    cmd->add_option("--config", o.config_path, "Run config (JSON)");
    cmd->add_option("--preset", o.preset, "Preset when no config file is given: desk or paper-shape");
    cmd->add_option("--seed", o.seed, "Override the config seed");
}

config::RunConfig resolve_config(const ConfigOptions& o) {
    try {
        config::RunConfig c;
        if (!o.config_path.empty()) {
            if (!fs::exists(o.config_path)) {
                throw UsageError("config file not found: " + o.config_path);
            }
            c = config::load_run_config(o.config_path);
        } else {
            c = config::RunConfig::preset_named(o.preset);
        }
        if (o.seed) {
            c.set_seed(*o.seed);
        }
        c.validate();
        return c;
    } catch (const UsageError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw UsageError(std::string("config: ") + e.what());
    } catch (const ParseError& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
}

void require_exists(const std::string& path, const std::string& what) {
    if (path.empty() || !fs::exists(path)) {
        throw UsageError(what + " not found: " + (path.empty() ? "<unset>" : path));
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
}

void write_json(const fs::path& path, const json& j) {
    io::write_text(path, j.dump(2) + "\n");
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(what + ": '" + item + "' is not an integer");
        }
    }
    if (out.empty()) {
        throw UsageError(what + ": empty list");
    }
    return out;
}

void check_periods(const std::vector<int>& periods) {
    std::set<int> seen;
    for (int p : periods) {
        if (p < 2 || !seen.insert(p).second) {
            throw UsageError("--periods must list distinct integers >= 2");
        }
    }
}

struct Models {
    tfm::ReferenceTfm tfm;
    llm::ReferenceLlm<float> lm;
    adapter::Adapter<float> model;

    Models(const tfm::TfmConfig& t, const llm::LlmConfig& l, const adapter::AdapterConfig& a)
        : tfm(t), lm(l), model(a, t.feature_dim, t.context, l.hidden) {}

    adapter::Backbones<float> backbones() const { return {tfm, lm}; }
};

struct Loaded {
    checkpoint::Checkpoint ckpt;
    std::unique_ptr<Models> models;
    adapter::AdapterParams<float> params;
};

Loaded load_checkpoint(const std::string& path) {
    require_exists(path, "checkpoint");
    Loaded l;
    l.ckpt = checkpoint::read(path);
    l.models = std::make_unique<Models>(l.ckpt.tfm, l.ckpt.llm, l.ckpt.adapter);
    l.params = l.ckpt.params.cast<float>();
    return l;
}

checkpoint::Checkpoint make_checkpoint(const config::RunConfig& c, const std::vector<int>& periods,
                                       const adapter::AdapterParams<float>& params) {
    return {c.adapter, c.tfm, c.llm, periods, params.cast<double>()};
}

void write_f32_matrix(const fs::path& path, const Mat<float>& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    io::write_f32(out, std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

json confusion_json(const trainer::PretextReport& r) {
    return r.confusion;
}

// ----------------------------- generate -----------------------------

struct GenerateArgs {
    ConfigOptions cfg;
    std::optional<int> n;
    std::string out;
    std::string periods;
    std::optional<int> max_nonperiodic;
};

int cmd_generate(const GenerateArgs& a) {
    auto c = resolve_config(a.cfg);
    if (a.n) {
        c.synthgen.n = *a.n;
    }
    if (!a.periods.empty()) {
        c.synthgen.period_set = parse_int_list(a.periods, "--periods");
    }
    check_periods(c.synthgen.period_set);
    if (a.max_nonperiodic) {
        c.synthgen.max_nonperiodic = *a.max_nonperiodic;
    }
    if (c.synthgen.n < static_cast<int>(c.synthgen.period_set.size())) {
        throw UsageError("--n must be at least the number of period classes");
    }
    if (c.synthgen.max_nonperiodic < 1) {
        throw UsageError("--max-nonperiodic must be >= 1");
    }

    synth::GenerateOptions opts;
    opts.max_nonperiodic = c.synthgen.max_nonperiodic;
    const auto ds = synth::generate_dataset(c.synthgen.n, c.synthgen.period_set, c.seed, opts);
    io::write_dataset(a.out, ds);

    const auto counts = ds.class_counts();
    const auto train = ds.indices(synth::Split::Train).size();
    const auto val = ds.indices(synth::Split::Val).size();
    const auto test = ds.indices(synth::Split::Test).size();
    fmt::print("generated {} samples (seed {}) into {}\n", ds.size(), c.seed, a.out);
    fmt::print("class counts: {}\n", counts);
    fmt::print("split train/val/test: {}/{}/{}\n", train, val, test);
    write_json(fs::path(a.out) / "summary.json",
               {{"command", "generate"}, {"n", ds.size()}, {"seed", c.seed}, {"class_counts", counts},
                {"split", {{"train", train}, {"val", val}, {"test", test}}}});
    return kExitOk;
}

// ----------------------------- init -----------------------------

struct InitArgs {
    ConfigOptions cfg;
    std::string out;
};

int cmd_init(const InitArgs& a) {
    const auto c = resolve_config(a.cfg);
    ensure_dir(a.out);
    const adapter::Adapter<float> model(c.adapter, c.tfm.feature_dim, c.tfm.context, c.llm.hidden);
    const auto path = fs::path(a.out) / "checkpoint.t2l";
    checkpoint::write(path, make_checkpoint(c, c.synthgen.period_set, model.initial_params()));
    fmt::print("wrote untrained checkpoint {} ({} adapter parameters)\n", path.string(), model.layout().weights);
    return kExitOk;
}

// ----------------------------- train -----------------------------

struct TrainArgs {
    ConfigOptions cfg;
    std::string data;
    std::string out;
    std::optional<int> epochs;
};

int cmd_train(const TrainArgs& a) {
    require_exists(a.data, "dataset directory");
    auto c = resolve_config(a.cfg);
    if (a.epochs) {
        c.trainer.epochs = *a.epochs;
    }
    const auto ds = io::read_dataset(a.data);
    if (static_cast<int>(ds.period_set.size()) != c.adapter.num_classes) {
        throw UsageError(fmt::format("dataset has {} period classes but adapter.num_classes is {}", ds.period_set.size(),
                                     c.adapter.num_classes));
    }
    try {
        c.trainer.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    ensure_dir(a.out);
    write_json(fs::path(a.out) / "config.json", config::to_json(c));

    const Models m(c.tfm, c.llm, c.adapter);
    std::ofstream metrics(fs::path(a.out) / "metrics.ndjson", std::ios::trunc);
    if (!metrics) {
        throw IoError("cannot write metrics.ndjson");
    }
    const auto sink = [&](const trainer::EpochRecord& r) {
        metrics << json{{"epoch", r.epoch}, {"split", "train"}, {"loss", r.train_loss}, {"seconds", r.seconds}}.dump()
                << '\n';
        if (r.evaluated) {
            metrics << json{{"epoch", r.epoch},
                            {"split", "val"},
                            {"loss", r.val_loss},
                            {"accuracy", r.val_accuracy},
                            {"seconds", r.seconds}}
                           .dump()
                    << '\n';
        }
        metrics.flush();
        fmt::print("epoch {:>3}  train_loss {:.4f}  val_loss {:.4f}  val_acc {:.4f}  {:.1f}s\n", r.epoch, r.train_loss,
                   r.val_loss, r.val_accuracy, r.seconds);
        std::fflush(stdout);
    };

    trainer::FitResult fit;
    try {
        fit = trainer::fit(ds, m.backbones(), m.model, c.trainer, sink);
    } catch (const trainer::TrainingDiverged& e) {
        checkpoint::write(fs::path(a.out) / "checkpoint.last_finite.t2l",
                          make_checkpoint(c, ds.period_set, e.last_good()));
        throw;
    }
    checkpoint::write(fs::path(a.out) / "checkpoint.t2l", make_checkpoint(c, ds.period_set, fit.params));
    const auto test = trainer::evaluate_pretext(fit.params, ds, synth::Split::Test, m.backbones(), m.model);
    fmt::print("best epoch {} (val_loss {:.4f}); test accuracy {:.4f}\n", fit.metrics.best_epoch,
               fit.metrics.best_val_loss, test.accuracy);
    write_json(fs::path(a.out) / "summary.json", {{"command", "train"},
                                                  {"best_epoch", fit.metrics.best_epoch},
                                                  {"best_val_loss", fit.metrics.best_val_loss},
                                                  {"initial_val_loss", fit.metrics.initial_val_loss},
                                                  {"initial_train_loss", fit.metrics.initial_train_loss},
                                                  {"test_loss", test.loss},
                                                  {"test_accuracy", test.accuracy},
                                                  {"test_confusion", confusion_json(test)}});
    return kExitOk;
}

// ----------------------------- eval -----------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    require_exists(a.data, "dataset directory");
    synth::Split split{};
    try {
        split = synth::split_from_string(a.split);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const auto l = load_checkpoint(a.checkpoint);
    const auto ds = io::read_dataset(a.data);
    if (ds.period_set != l.ckpt.period_set) {
        throw IncompatibleArtifact("dataset period set does not match the checkpoint's");
    }
    const auto r = trainer::evaluate_pretext(l.params, ds, split, l.models->backbones(), l.models->model);
    fmt::print("split {}: n {}  loss {:.4f}  accuracy {:.4f}\n", a.split, r.count, r.loss, r.accuracy);
    for (const auto& row : r.confusion) {
        fmt::print("  {}\n", fmt::join(row, " "));
    }
    const json summary{{"command", "eval"},      {"split", a.split},        {"n", r.count},
                       {"loss", r.loss},         {"accuracy", r.accuracy},  {"confusion", confusion_json(r)}};
    if (!a.out.empty()) {
        ensure_dir(fs::path(a.out).parent_path().empty() ? fs::path(".") : fs::path(a.out).parent_path());
        write_json(a.out, summary);
    }
    fmt::print("{}\n", summary.dump());
    return kExitOk;
}

// ----------------------------- embed -----------------------------

struct EmbedArgs {
    std::string checkpoint;
    std::string input;
    std::string data;
    std::string split = "test";
    std::string out;
    double threshold = 0.25;
    bool residual = false;
};

struct SeriesSet {
    std::vector<std::vector<float>> series;
    std::vector<std::size_t> source_rows;
    std::vector<std::string> subjects;
    std::vector<int> labels;
    std::size_t dropped = 0;
};

SeriesSet load_series(const EmbedArgs& a) {
    SeriesSet s;
    if (!a.input.empty()) {
        require_exists(a.input, "input CSV");
        auto ing = downstream::ingest_csv(a.input, a.threshold);
        for (std::size_t i = 0; i < ing.records.size(); ++i) {
            s.series.push_back(std::move(ing.records[i].series));
            s.subjects.push_back(ing.records[i].subject_id);
            s.labels.push_back(ing.records[i].label);
            s.source_rows.push_back(ing.source_rows[i]);
        }
        s.dropped = ing.dropped;
        return s;
    }
    require_exists(a.data, "dataset directory");
    synth::Split split{};
    try {
        split = synth::split_from_string(a.split);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const auto ds = io::read_dataset(a.data);
    for (std::size_t row : ds.indices(split)) {
        s.series.push_back(ds.samples[row].series);
        s.subjects.push_back("syn" + std::to_string(row));
        s.labels.push_back(ds.samples[row].period_class);
        s.source_rows.push_back(row);
    }
    return s;
}

Mat<float> embed_all(const std::vector<std::vector<float>>& series, const Models& m,
                     const adapter::AdapterParams<float>& params, bool residual) {
    constexpr std::size_t kChunk = 64;
    Mat<float> out(static_cast<Eigen::Index>(series.size()), m.model.config().proj_dims.second);
    for (std::size_t start = 0; start < series.size(); start += kChunk) {
        const std::size_t end = std::min(series.size(), start + kChunk);
        const std::span<const std::vector<float>> part(series.data() + start, end - start);
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
            adapter::embed_batch(part, m.backbones(), m.model, params, residual);
    }
    return out;
}

int cmd_embed(const EmbedArgs& a) {
    if (a.input.empty() == a.data.empty()) {
        throw UsageError("embed needs exactly one of --input <csv> or --data <dir>");
    }
    const auto l = load_checkpoint(a.checkpoint);
    const auto s = load_series(a);
    const Mat<float> e = embed_all(s.series, *l.models, l.params, a.residual);

    ensure_dir(a.out);
    const fs::path dir(a.out);
    write_f32_matrix(dir / "embeddings.f32", e);
    write_json(dir / "embeddings.json", {{"format", "t2l-embeddings"},
                                         {"version", 1},
                                         {"rows", e.rows()},
                                         {"dim", e.cols()},
                                         {"residual", a.residual},
                                         {"dropped", s.dropped}});
    std::ostringstream index;
    index << "row,source_row,subject_id,label\n";
    for (std::size_t i = 0; i < s.series.size(); ++i) {
        index << i << ',' << s.source_rows[i] << ',' << s.subjects[i] << ',' << s.labels[i] << '\n';
    }
    io::write_text(dir / "index.csv", index.str());
    fmt::print("embedded {} records ({} dropped) into {} ({} dims)\n", e.rows(), s.dropped, a.out, e.cols());
    return kExitOk;
}

// ----------------------------- probe -----------------------------

struct ProbeArgs {
    ConfigOptions cfg;
    std::string embeddings;
    std::string labels;
    std::string out;
};

Eigen::MatrixXd read_embeddings(const fs::path& path) {
    fs::path meta = path;
    meta.replace_extension(".json");
    require_exists(meta.string(), "embedding metadata");
    json j;
    try {
        j = json::parse(io::read_text(meta));
    } catch (const json::exception& e) {
        throw ParseError(meta.string() + ": " + e.what());
    }
    if (j.value("format", "") != "t2l-embeddings" || j.value("version", 0) != 1) {
        throw IncompatibleArtifact(meta.string() + ": unsupported embedding format or version");
    }
    const auto rows = j.at("rows").get<std::size_t>();
    const auto dim = j.at("dim").get<std::size_t>();
    std::ifstream in(path, std::ios::binary);
    const auto flat = io::read_f32(in, rows * dim);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * dim + c];
        }
    }
    return m;
}

void read_index(const fs::path& path, std::vector<std::string>& subjects, std::vector<int>& labels) {
    std::istringstream in(io::read_text(path));
    std::string line;
    std::getline(in, line);
    if (line.rfind("row,source_row,subject_id,label", 0) != 0) {
        throw ParseError(path.string() + ":1: expected header row,source_row,subject_id,label");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string row, src, subject, label;
        if (!std::getline(ss, row, ',') || !std::getline(ss, src, ',') || !std::getline(ss, subject, ',') ||
            !std::getline(ss, label, ',')) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
        }
        subjects.push_back(subject);
        labels.push_back(std::stoi(label));
    }
}

int cmd_probe(const ProbeArgs& a) {
    require_exists(a.embeddings, "embeddings file");
    require_exists(a.labels, "labels file");
    const auto c = resolve_config(a.cfg);
    const auto x = read_embeddings(a.embeddings);
    std::vector<std::string> subjects;
    std::vector<int> labels;
    read_index(a.labels, subjects, labels);
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw UsageError(fmt::format("embeddings have {} rows but the labels file has {}", x.rows(), labels.size()));
    }
    for (int y : labels) {
        if (y != 0 && y != 1) {
            throw UsageError("probe needs binary labels (0/1)");
        }
    }
    const auto r = downstream::probe(x, labels, subjects, c.probe, derive_seed(c.seed, 200));
    for (const auto& w : r.warnings) {
        fmt::print(stderr, "warning: {}\n", w);
    }
    fmt::print("AUROC {:.4f} +/- {:.4f}   AUPRC {:.4f} +/- {:.4f}   ({} shuffles)\n", r.auroc_mean, r.auroc_std,
               r.auprc_mean, r.auprc_std, r.shuffles.size());

    json shuffles = json::array();
    std::ostringstream csv;
    csv << "shuffle,auroc,auprc,penalty,C,l1_ratio,cv_auroc,n_train,n_test\n";
    for (std::size_t i = 0; i < r.shuffles.size(); ++i) {
        const auto& s = r.shuffles[i];
        shuffles.push_back({{"auroc", s.auroc},
                            {"auprc", s.auprc},
                            {"penalty", downstream::to_string(s.chosen.penalty)},
                            {"C", s.chosen.c},
                            {"l1_ratio", s.chosen.l1_ratio},
                            {"cv_auroc", s.cv_auroc}});
        csv << fmt::format("{},{},{},{},{},{},{},{},{}\n", i, s.auroc, s.auprc, downstream::to_string(s.chosen.penalty),
                           s.chosen.c, s.chosen.l1_ratio, s.cv_auroc, s.n_train, s.n_test);
    }
    const json summary{{"command", "probe"},          {"auroc_mean", r.auroc_mean}, {"auroc_std", r.auroc_std},
                       {"auprc_mean", r.auprc_mean},  {"auprc_std", r.auprc_std},   {"shuffles", shuffles},
                       {"warnings", r.warnings}};
    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_json(fs::path(a.out) / "probe_report.json", summary);
        io::write_text(fs::path(a.out) / "probe_shuffles.csv", csv.str());
    }
    fmt::print("{}\n", summary.dump());
    return kExitOk;
}

// ----------------------------- analyze-acf -----------------------------

struct AcfArgs {
    ConfigOptions cfg;
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::optional<int> n;
    std::string out;
};

int cmd_analyze_acf(const AcfArgs& a) {
    require_exists(a.data, "dataset directory");
    const auto c = resolve_config(a.cfg);
    const auto l = load_checkpoint(a.checkpoint);
    synth::Split split{};
    try {
        split = synth::split_from_string(a.split);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const auto ds = io::read_dataset(a.data);
    auto rows = ds.indices(split);
    const auto n = static_cast<std::size_t>(a.n.value_or(c.analysis.samples));
    if (rows.size() > n) {
        rows.resize(n);
    }
    std::vector<std::vector<float>> series;
    for (std::size_t r : rows) {
        series.push_back(ds.samples[r].series);
    }
    const Mat<float> e = embed_all(series, *l.models, l.params, false);
    const auto report =
        analysis::embedding_acf_correlation(series, e.cast<double>(), c.analysis.n_lags, c.analysis.threshold);
    for (const auto& w : report.warnings) {
        fmt::print(stderr, "warning: {}\n", w);
    }

    ensure_dir(a.out);
    std::ostringstream matrix, maxima;
    matrix << "dim";
    for (int lag = 1; lag <= c.analysis.n_lags; ++lag) {
        matrix << ",lag" << lag;
    }
    matrix << '\n';
    maxima << "dim,max_rho\n";
    for (Eigen::Index j = 0; j < report.matrix.rows(); ++j) {
        matrix << j;
        for (Eigen::Index lag = 0; lag < report.matrix.cols(); ++lag) {
            matrix << ',' << report.matrix(j, lag);
        }
        matrix << '\n';
        maxima << j << ',' << report.max_per_dim[static_cast<std::size_t>(j)] << '\n';
    }
    io::write_text(fs::path(a.out) / "acf_matrix.csv", matrix.str());
    io::write_text(fs::path(a.out) / "acf_max.csv", maxima.str());
    const json summary{{"command", "analyze-acf"},
                       {"samples", series.size()},
                       {"dims", report.max_per_dim.size()},
                       {"threshold", report.threshold},
                       {"count_above_threshold", report.count_above_threshold},
                       {"fraction_above_threshold", report.fraction_above()},
                       {"skipped_dims", report.skipped_dims}};
    write_json(fs::path(a.out) / "acf_summary.json", summary);
    fmt::print("{} of {} dims have max |rho| > {} ({:.1f}%)\n", report.count_above_threshold,
               report.max_per_dim.size(), report.threshold, 100.0 * report.fraction_above());
    return kExitOk;
}

// ----------------------------- bench -----------------------------

struct BenchArgs {
    ConfigOptions cfg;
    std::string checkpoint;
    std::string lengths;
    std::optional<int> repeats, warmup, batch;
    std::string out;
};

int cmd_bench(const BenchArgs& a) {
    const auto c = resolve_config(a.cfg);
    std::unique_ptr<Models> models;
    adapter::AdapterParams<float> params;
    if (!a.checkpoint.empty()) {
        auto l = load_checkpoint(a.checkpoint);
        models = std::move(l.models);
        params = std::move(l.params);
    } else {
        models = std::make_unique<Models>(c.tfm, c.llm, c.adapter);
        params = models->model.initial_params();
    }
    const auto lengths = a.lengths.empty() ? c.analysis.bench_lengths : parse_int_list(a.lengths, "--lengths");
    for (int len : lengths) {
        if (len < 1) {
            throw UsageError("--lengths entries must be >= 1");
        }
    }
    const int repeats = a.repeats.value_or(c.analysis.repeats);
    const int warmup = a.warmup.value_or(c.analysis.warmup);
    const int batch = a.batch.value_or(c.analysis.batch);
    if (repeats < 1 || warmup < 0 || batch < 1) {
        throw UsageError("--repeats >= 1, --warmup >= 0 and --batch >= 1 required");
    }

    const auto backbones = models->backbones();
    const auto pipeline = [&](std::span<const std::vector<float>> series) {
        adapter::predict_batch(series, backbones, models->model, params);
    };
    const auto report = analysis::bench_latency(pipeline, lengths, repeats, warmup, batch);
    for (const auto& w : report.warnings) {
        fmt::print(stderr, "warning: {}\n", w);
    }

    std::ostringstream csv;
    csv << "# pipeline=time2lang preset=" << c.preset << " tfm_context=" << models->tfm.context()
        << " llm_hidden=" << models->lm.hidden() << " threads=" << worker_count() << '\n';
    csv << "length,latency_ms_mean,latency_ms_std,throughput_mean,throughput_std,repeats,warmup,batch\n";
    for (const auto& r : report.rows) {
        const auto line = fmt::format("{},{:.4f},{:.4f},{:.3f},{:.3f},{},{},{}\n", r.length, r.latency_ms_mean,
                                      r.latency_ms_std, r.throughput_mean, r.throughput_std, r.repeats, r.warmup,
                                      r.batch);
        csv << line;
    }
    if (!a.out.empty()) {
        const fs::path out(a.out);
        if (out.has_parent_path()) {
            ensure_dir(out.parent_path());
        }
        io::write_text(out, csv.str());
    }
    fmt::print("{}", csv.str());
    return kExitOk;
}

// ----------------------------- make-downstream -----------------------------

struct DownstreamArgs {
    std::string out;
    std::uint64_t seed = 11;
    int subjects = 200;
    int records = 4;
};

int cmd_make_downstream(const DownstreamArgs& a) {
    downstream::BenchmarkOptions opts;
    opts.subjects = a.subjects;
    opts.records_per_subject = a.records;
    if (opts.subjects < 2 || opts.records_per_subject < 1) {
        throw UsageError("--subjects must be >= 2 and --records-per-subject >= 1");
    }
    const fs::path out(a.out);
    if (out.has_parent_path()) {
        ensure_dir(out.parent_path());
    }
    std::ofstream file(out, std::ios::trunc);
    if (!file) {
        throw IoError("cannot write " + a.out);
    }
    downstream::write_benchmark_csv(file, opts, a.seed);
    fmt::print("wrote {} records for {} subjects to {}\n", opts.subjects * opts.records_per_subject, opts.subjects,
               a.out);
    return kExitOk;
}

// ----------------------------- dump-weights -----------------------------

struct DumpArgs {
    ConfigOptions cfg;
    std::string out;
};

int cmd_dump_weights(const DumpArgs& a) {
    const auto c = resolve_config(a.cfg);
    ensure_dir(a.out);
    const tfm::ReferenceTfm t(c.tfm);
    const llm::ReferenceLlm<float> l(c.llm);
    const auto tw = t.flat_weights();
    const auto lw = l.flat_weights();
    for (const auto& [name, w] : {std::pair{"tfm_weights.f32", &tw}, std::pair{"llm_weights.f32", &lw}}) {
        std::ofstream out(fs::path(a.out) / name, std::ios::binary | std::ios::trunc);
        io::write_f32(out, *w);
    }
    write_json(fs::path(a.out) / "weights.json",
               {{"tfm", config::to_json(c.tfm)}, {"llm", config::to_json(c.llm)}, {"tfm_count", tw.size()},
                {"llm_count", lw.size()}});
    fmt::print("tfm {} floats, llm {} floats written to {}\n", tw.size(), lw.size(), a.out);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"t2l: Time2Lang reprogramming toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate a synthetic periodicity dataset");
    add_config_options(g, gen.cfg);
    g->add_option("--n", gen.n, "Number of samples");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--periods", gen.periods, "Comma-separated period set");
    g->add_option("--max-nonperiodic", gen.max_nonperiodic, "Maximum non-periodic kernels per sample");

    InitArgs init;
    auto* in = app.add_subcommand("init", "Write an untrained adapter checkpoint");
    add_config_options(in, init.cfg);
    in->add_option("--out", init.out, "Output directory")->required();

    TrainArgs train;
    auto* tr = app.add_subcommand("train", "Train the adapter on the pretext task");
    add_config_options(tr, train.cfg);
    tr->add_option("--data", train.data, "Dataset directory")->required();
    tr->add_option("--out", train.out, "Output directory")->required();
    tr->add_option("--epochs", train.epochs, "Override trainer.epochs");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate pretext accuracy of a checkpoint");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    e->add_option("--data", ev.data, "Dataset directory")->required();
    e->add_option("--split", ev.split, "train, val or test");
    e->add_option("--out", ev.out, "Summary JSON path");

    EmbedArgs em;
    auto* emb = app.add_subcommand("embed", "Extract penultimate-layer embeddings");
    emb->add_option("--checkpoint", em.checkpoint, "Checkpoint file")->required();
    emb->add_option("--input", em.input, "Downstream CSV (subject_id,label,v0,...)");
    emb->add_option("--data", em.data, "Synthetic dataset directory");
    emb->add_option("--split", em.split, "Split when --data is used");
    emb->add_option("--out", em.out, "Output directory")->required();
    emb->add_option("--missing-threshold", em.threshold, "Drop records at or above this missing fraction");
    emb->add_flag("--with-residual", em.residual, "Keep the residual addend in z_o");

    ProbeArgs pr;
    auto* p = app.add_subcommand("probe", "Linear-probe evaluation over embeddings");
    add_config_options(p, pr.cfg);
    p->add_option("--embeddings", pr.embeddings, "embeddings.f32 from embed")->required();
    p->add_option("--labels", pr.labels, "index.csv from embed")->required();
    p->add_option("--out", pr.out, "Output directory");

    AcfArgs acf;
    auto* ac = app.add_subcommand("analyze-acf", "Spearman study of embeddings vs. series ACF");
    add_config_options(ac, acf.cfg);
    ac->add_option("--checkpoint", acf.checkpoint, "Checkpoint file")->required();
    ac->add_option("--data", acf.data, "Synthetic dataset directory")->required();
    ac->add_option("--split", acf.split, "Split to sample from");
    ac->add_option("--n", acf.n, "Number of samples");
    ac->add_option("--out", acf.out, "Output directory")->required();

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Latency and throughput benchmark");
    add_config_options(b, bench.cfg);
    b->add_option("--checkpoint", bench.checkpoint, "Checkpoint file (fresh init when omitted)");
    b->add_option("--lengths", bench.lengths, "Comma-separated input lengths");
    b->add_option("--repeats", bench.repeats, "Timed repeats");
    b->add_option("--warmup", bench.warmup, "Warm-up iterations");
    b->add_option("--batch", bench.batch, "Throughput batch size");
    b->add_option("--out", bench.out, "CSV output path");

    DownstreamArgs ds;
    auto* d = app.add_subcommand("make-downstream", "Write the bundled synthetic downstream benchmark CSV");
    d->add_option("--out", ds.out, "CSV path")->required();
    d->add_option("--seed", ds.seed, "Seed");
    d->add_option("--subjects", ds.subjects, "Number of subjects");
    d->add_option("--records-per-subject", ds.records, "Records per subject");

    DumpArgs dump;
    auto* dw = app.add_subcommand("dump-weights", "Write frozen backbone weights as float32");
    add_config_options(dw, dump.cfg);
    dw->add_option("--out", dump.out, "Output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitUsage;
    }

    try {
        if (g->parsed()) {
            return cmd_generate(gen);
        }
        if (in->parsed()) {
            return cmd_init(init);
        }
        if (tr->parsed()) {
            return cmd_train(train);
        }
        if (e->parsed()) {
            return cmd_eval(ev);
        }
        if (emb->parsed()) {
            return cmd_embed(em);
        }
        if (p->parsed()) {
            return cmd_probe(pr);
        }
        if (ac->parsed()) {
            return cmd_analyze_acf(acf);
        }
        if (b->parsed()) {
            return cmd_bench(bench);
        }
        if (d->parsed()) {
            return cmd_make_downstream(ds);
        }
        if (dw->parsed()) {
            return cmd_dump_weights(dump);
        }
    } catch (const UsageError& ex) {
        fmt::print(stderr, "usage error: {}\n", ex.what());
        return kExitUsage;
    } catch (const IncompatibleArtifact& ex) {
        fmt::print(stderr, "incompatible artifact: {}\n", ex.what());
        return kExitFailure;
    } catch (const std::exception& ex) {
        fmt::print(stderr, "error: {}\n", ex.what());
        return kExitFailure;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    return run(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace t2l::cli
