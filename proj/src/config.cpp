#include "t2l/config.hpp"

#include "t2l/dataset_io.hpp"

#include <set>

namespace t2l::config {

namespace {

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> known) {
    if (!j.is_object()) {
        throw InvalidArgument(path + ": expected an object");
    }
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& item : j.items()) {
        if (!allowed.contains(item.key())) {
            throw InvalidArgument(path + "." + item.key() + ": unknown key");
        }
    }
}

template <class V>
void read(const json& j, const std::string& path, const char* key, V& out) {
    const auto it = j.find(key);
    if (it == j.end()) {
        return;
    }
    try {
        out = it->template get<V>();
    } catch (const json::exception& e) {
        throw InvalidArgument(path + "." + key + ": " + e.what());
    }
}

}  // namespace

json to_json(const tfm::TfmConfig& c) {
    return {{"context", c.context},     {"feature_dim", c.feature_dim}, {"vocab_bins", c.vocab_bins},
            {"clip_limit", c.clip_limit}, {"layers", c.layers},         {"heads", c.heads},
            {"ff_dim", c.ff_dim},       {"init_seed", c.init_seed}};
}

json to_json(const llm::LlmConfig& c) {
    return {{"hidden", c.hidden},       {"layers", c.layers},       {"heads", c.heads},
            {"ff_dim", c.ff_dim},       {"max_positions", c.max_positions}, {"init_seed", c.init_seed},
            {"attend_padding", c.attend_padding}};
}

json to_json(const adapter::AdapterConfig& c) {
    return {{"base_filters", c.base_filters},
            {"blocks", c.blocks},
            {"kernel_size", c.kernel_size},
            {"stride", c.stride},
            {"out_channels", c.out_channels},
            {"out_tokens", c.out_tokens},
            {"proj_dims", {c.proj_dims.first, c.proj_dims.second}},
            {"num_classes", c.num_classes},
            {"dropout", c.dropout},
            {"init_seed", c.init_seed}};
}

json to_json(const trainer::TrainConfig& c) {
    return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},           {"beta2", c.beta2},           {"adam_eps", c.adam_eps},
            {"seed", c.seed},             {"eval_every", c.eval_every}, {"clip_norm", c.clip_norm}};
}

json to_json(const downstream::ProbeConfig& c) {
    json penalties = json::array();
    for (auto p : c.penalties) {
        penalties.push_back(downstream::to_string(p));
    }
    return {{"test_fraction", c.test_fraction}, {"cv_folds", c.cv_folds}, {"n_shuffles", c.n_shuffles},
            {"c_values", c.c_values},           {"penalties", penalties}, {"l1_ratios", c.l1_ratios},
            {"max_iter", c.max_iter},           {"tol", c.tol}};
}

json to_json(const RunConfig& c) {
    return {{"preset", c.preset},
            {"seed", c.seed},
            {"output_dir", c.output_dir},
            {"synthgen",
             {{"n", c.synthgen.n}, {"period_set", c.synthgen.period_set}, {"max_nonperiodic", c.synthgen.max_nonperiodic}}},
            {"tfm", to_json(c.tfm)},
            {"llm", to_json(c.llm)},
            {"adapter", to_json(c.adapter)},
            {"trainer", to_json(c.trainer)},
            {"probe", to_json(c.probe)},
            {"analysis",
             {{"n_lags", c.analysis.n_lags},
              {"threshold", c.analysis.threshold},
              {"samples", c.analysis.samples},
              {"bench_lengths", c.analysis.bench_lengths},
              {"repeats", c.analysis.repeats},
              {"warmup", c.analysis.warmup},
              {"batch", c.analysis.batch}}}};
}

tfm::TfmConfig tfm_from_json(const json& j, tfm::TfmConfig c, const std::string& path) {
    reject_unknown(j, path, {"context", "feature_dim", "vocab_bins", "clip_limit", "layers", "heads", "ff_dim", "init_seed"});
    read(j, path, "context", c.context);
    read(j, path, "feature_dim", c.feature_dim);
    read(j, path, "vocab_bins", c.vocab_bins);
    read(j, path, "clip_limit", c.clip_limit);
    read(j, path, "layers", c.layers);
    read(j, path, "heads", c.heads);
    read(j, path, "ff_dim", c.ff_dim);
    read(j, path, "init_seed", c.init_seed);
    return c;
}

llm::LlmConfig llm_from_json(const json& j, llm::LlmConfig c, const std::string& path) {
    reject_unknown(j, path, {"hidden", "layers", "heads", "ff_dim", "max_positions", "init_seed", "attend_padding"});
    read(j, path, "hidden", c.hidden);
    read(j, path, "layers", c.layers);
    read(j, path, "heads", c.heads);
    read(j, path, "ff_dim", c.ff_dim);
    read(j, path, "max_positions", c.max_positions);
    read(j, path, "init_seed", c.init_seed);
    read(j, path, "attend_padding", c.attend_padding);
    return c;
}

adapter::AdapterConfig adapter_from_json(const json& j, adapter::AdapterConfig c, const std::string& path) {
    reject_unknown(j, path, {"base_filters", "blocks", "kernel_size", "stride", "out_channels", "out_tokens", "proj_dims",
                             "num_classes", "dropout", "init_seed"});
    read(j, path, "base_filters", c.base_filters);
    read(j, path, "blocks", c.blocks);
    read(j, path, "kernel_size", c.kernel_size);
    read(j, path, "stride", c.stride);
    read(j, path, "out_channels", c.out_channels);
    read(j, path, "out_tokens", c.out_tokens);
    if (j.contains("proj_dims")) {
        std::vector<int> dims;
        read(j, path, "proj_dims", dims);
        if (dims.size() != 2) {
            throw InvalidArgument(path + ".proj_dims: expected two integers");
        }
        c.proj_dims = {dims[0], dims[1]};
    }
    read(j, path, "num_classes", c.num_classes);
    read(j, path, "dropout", c.dropout);
    read(j, path, "init_seed", c.init_seed);
    return c;
}

trainer::TrainConfig trainer_from_json(const json& j, trainer::TrainConfig c, const std::string& path) {
    reject_unknown(j, path, {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "seed", "eval_every",
                             "clip_norm"});
    read(j, path, "epochs", c.epochs);
    read(j, path, "batch_size", c.batch_size);
    read(j, path, "learning_rate", c.learning_rate);
    read(j, path, "beta1", c.beta1);
    read(j, path, "beta2", c.beta2);
    read(j, path, "adam_eps", c.adam_eps);
    read(j, path, "seed", c.seed);
    read(j, path, "eval_every", c.eval_every);
    read(j, path, "clip_norm", c.clip_norm);
    return c;
}

namespace {

downstream::ProbeConfig probe_from_json(const json& j, downstream::ProbeConfig c, const std::string& path) {
    reject_unknown(j, path, {"test_fraction", "cv_folds", "n_shuffles", "c_values", "penalties", "l1_ratios", "max_iter", "tol"});
    read(j, path, "test_fraction", c.test_fraction);
    read(j, path, "cv_folds", c.cv_folds);
    read(j, path, "n_shuffles", c.n_shuffles);
    read(j, path, "c_values", c.c_values);
    if (j.contains("penalties")) {
        std::vector<std::string> names;
        read(j, path, "penalties", names);
        c.penalties.clear();
        for (const auto& n : names) {
            try {
                c.penalties.push_back(downstream::penalty_from_string(n));
            } catch (const InvalidArgument& e) {
                throw InvalidArgument(path + ".penalties: " + e.what());
            }
        }
    }
    read(j, path, "l1_ratios", c.l1_ratios);
    read(j, path, "max_iter", c.max_iter);
    read(j, path, "tol", c.tol);
    return c;
}

SynthSection synth_from_json(const json& j, SynthSection c, const std::string& path) {
    reject_unknown(j, path, {"n", "period_set", "max_nonperiodic"});
    read(j, path, "n", c.n);
    read(j, path, "period_set", c.period_set);
    read(j, path, "max_nonperiodic", c.max_nonperiodic);
    return c;
}

AnalysisSection analysis_from_json(const json& j, AnalysisSection c, const std::string& path) {
    reject_unknown(j, path, {"n_lags", "threshold", "samples", "bench_lengths", "repeats", "warmup", "batch"});
    read(j, path, "n_lags", c.n_lags);
    read(j, path, "threshold", c.threshold);
    read(j, path, "samples", c.samples);
    read(j, path, "bench_lengths", c.bench_lengths);
    read(j, path, "repeats", c.repeats);
    read(j, path, "warmup", c.warmup);
    read(j, path, "batch", c.batch);
    return c;
}

template <class F>
void section(const std::string& name, F&& check) {
    try {
        check();
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(name + ": " + e.what());
    }
}

}  // namespace

void RunConfig::validate() const {
    section("synthgen", [&] {
        if (synthgen.n < static_cast<int>(synthgen.period_set.size())) {
            throw InvalidArgument("n must be >= the number of period classes");
        }
        if (synthgen.period_set.empty()) {
            throw InvalidArgument("period_set must not be empty");
        }
        std::set<int> seen;
        for (int p : synthgen.period_set) {
            if (p < 1 || !seen.insert(p).second) {
                throw InvalidArgument("period_set entries must be distinct positive integers");
            }
        }
        if (synthgen.max_nonperiodic < 1) {
            throw InvalidArgument("max_nonperiodic must be >= 1");
        }
    });
    section("tfm", [&] { tfm.validate(); });
    section("llm", [&] { llm.validate(); });
    section("adapter", [&] {
        adapter.validate();
        if (adapter.out_channels > llm.hidden) {
            throw InvalidArgument("out_channels exceeds llm.hidden");
        }
        if (adapter.out_tokens > llm.max_positions) {
            throw InvalidArgument("out_tokens exceeds llm.max_positions");
        }
        if (adapter.num_classes != static_cast<int>(synthgen.period_set.size())) {
            throw InvalidArgument("num_classes must equal the number of periods in synthgen.period_set");
        }
    });
    section("trainer", [&] { trainer.validate(); });
    section("probe", [&] { probe.validate(); });
    section("analysis", [&] {
        if (analysis.n_lags < 1 || analysis.samples < 3 || analysis.repeats < 1 || analysis.warmup < 0 ||
            analysis.batch < 1 || analysis.bench_lengths.empty()) {
            throw InvalidArgument("n_lags >= 1, samples >= 3, repeats >= 1, warmup >= 0, batch >= 1 and a non-empty "
                                  "bench_lengths list are required");
        }
    });
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    trainer.seed = derive_seed(s, 100);
}

RunConfig RunConfig::preset_named(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") {
        c.synthgen.n = 6000;
        c.trainer.epochs = 10;
    } else if (name == "paper-shape") {
        c.synthgen.n = 200000;
        c.tfm = tfm::TfmConfig::paper_shape();
        c.llm = llm::LlmConfig::paper_shape();
        c.trainer.epochs = 25;
    } else {
        throw InvalidArgument("unknown preset '" + name + "' (expected desk or paper-shape)");
    }
    c.set_seed(c.seed);
    return c;
}

RunConfig run_config_from_json(const json& j) {
    reject_unknown(j, "config",
                   {"preset", "seed", "output_dir", "synthgen", "tfm", "llm", "adapter", "trainer", "probe", "analysis"});
    std::string preset = "desk";
    read(j, "config", "preset", preset);
    RunConfig c = RunConfig::preset_named(preset);
    if (j.contains("seed")) {
        std::uint64_t s = 0;
        read(j, "config", "seed", s);
        c.set_seed(s);
    }
    read(j, "config", "output_dir", c.output_dir);
    if (j.contains("synthgen")) {
        c.synthgen = synth_from_json(j["synthgen"], c.synthgen, "synthgen");
    }
    if (j.contains("tfm")) {
        c.tfm = tfm_from_json(j["tfm"], c.tfm, "tfm");
    }
    if (j.contains("llm")) {
        c.llm = llm_from_json(j["llm"], c.llm, "llm");
    }
    if (j.contains("adapter")) {
        c.adapter = adapter_from_json(j["adapter"], c.adapter, "adapter");
    }
    if (j.contains("trainer")) {
        c.trainer = trainer_from_json(j["trainer"], c.trainer, "trainer");
    }
    if (j.contains("probe")) {
        c.probe = probe_from_json(j["probe"], c.probe, "probe");
    }
    if (j.contains("analysis")) {
        c.analysis = analysis_from_json(j["analysis"], c.analysis, "analysis");
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace t2l::config
