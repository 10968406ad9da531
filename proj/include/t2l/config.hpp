#pragma once

// Run configuration: one JSON document with a section per module. Loading starts
// from a named preset, then applies the file's values; unknown keys are errors.

#include "t2l/adapter.hpp"
#include "t2l/downstream.hpp"
#include "t2l/llm.hpp"
#include "t2l/synthgen.hpp"
#include "t2l/tfm.hpp"
#include "t2l/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace t2l::config {

using nlohmann::json;

struct SynthSection {
    int n = 6000;
    std::vector<int> period_set = synth::kDefaultPeriods;
    int max_nonperiodic = 4;
    bool operator==(const SynthSection&) const = default;
};

struct AnalysisSection {
    int n_lags = 10;
    double threshold = 0.3;
    int samples = 500;
    std::vector<int> bench_lengths{256, 512, 1024, 2048, 4096};
    int repeats = 100;
    int warmup = 100;
    int batch = 16;
    bool operator==(const AnalysisSection&) const = default;
};

struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 7;
    std::string output_dir = "runs";
    SynthSection synthgen;
    tfm::TfmConfig tfm;
    llm::LlmConfig llm;
    adapter::AdapterConfig adapter;
    trainer::TrainConfig trainer;
    downstream::ProbeConfig probe;
    AnalysisSection analysis;

    // Throws InvalidArgument naming the offending section.
    void validate() const;

    // Sets the global seed and every seed that is derived from it.
    void set_seed(std::uint64_t s);

    static RunConfig preset_named(const std::string& name);
};

json to_json(const tfm::TfmConfig& c);
json to_json(const llm::LlmConfig& c);
json to_json(const adapter::AdapterConfig& c);
json to_json(const trainer::TrainConfig& c);
json to_json(const downstream::ProbeConfig& c);
json to_json(const RunConfig& c);

// Each reader starts from `base` and overwrites the keys present in j.
tfm::TfmConfig tfm_from_json(const json& j, tfm::TfmConfig base = {}, const std::string& path = "tfm");
llm::LlmConfig llm_from_json(const json& j, llm::LlmConfig base = {}, const std::string& path = "llm");
adapter::AdapterConfig adapter_from_json(const json& j, adapter::AdapterConfig base = {},
                                         const std::string& path = "adapter");
trainer::TrainConfig trainer_from_json(const json& j, trainer::TrainConfig base = {},
                                       const std::string& path = "trainer");

// The "preset" key (default "desk") selects the starting point.
RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace t2l::config
