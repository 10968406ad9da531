#include "helpers.hpp"

#include "t2l/checkpoint.hpp"
#include "t2l/cli.hpp"
#include "t2l/config.hpp"
#include "t2l/dataset_io.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <unistd.h>

using namespace t2l;
using namespace t2l::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("t2l_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t data_lines(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') {
            ++n;
        }
    }
    return n - 1;  // header
}

config::RunConfig tiny_run() {
    auto c = config::RunConfig::preset_named("desk");
    c.tfm = tiny_tfm();
    c.llm = tiny_llm();
    c.adapter = tiny_adapter();
    c.synthgen.n = 30;
    c.synthgen.period_set = {8, 16, 24};
    c.trainer.epochs = 1;
    c.probe.n_shuffles = 2;
    c.analysis.samples = 8;
    return c;
}

int run_cli(std::vector<std::string> args) {
    return cli::run(args);
}

}  // namespace

TEST_CASE("dataset files round-trip and are byte-stable") {
    TempDir tmp("io");
    synth::GenerateOptions go;
    go.length = 50;
    const auto ds = synth::generate_dataset(12, std::vector<int>{5, 10, 15}, 3, go);
    io::write_dataset(tmp / "a", ds);
    io::write_dataset(tmp / "b", ds);
    for (const char* f : {"meta.json", "series.f32", "labels.csv"}) {
        CHECK(slurp(fs::path(tmp / "a") / f) == slurp(fs::path(tmp / "b") / f));
    }
    const auto back = io::read_dataset(tmp / "a");
    CHECK(back.period_set == ds.period_set);
    CHECK(back.master_seed == ds.master_seed);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].series == ds.samples[i].series);
        CHECK(back.samples[i].period_class == ds.samples[i].period_class);
        CHECK(back.samples[i].seed == ds.samples[i].seed);
        CHECK(back.split[i] == ds.split[i]);
    }
}

TEST_CASE("checkpoint round trip and incompatibility") {
    TempDir tmp("ckpt");
    const auto run = tiny_run();
    const adapter::Adapter<double> model(run.adapter, run.tfm.feature_dim, run.tfm.context, run.llm.hidden);
    const checkpoint::Checkpoint ck{run.adapter, run.tfm, run.llm, run.synthgen.period_set, model.initial_params()};
    checkpoint::write(tmp / "c.t2l", ck);
    const auto back = checkpoint::read(tmp / "c.t2l");
    CHECK(back.adapter == ck.adapter);
    CHECK(back.tfm == ck.tfm);
    CHECK(back.llm == ck.llm);
    CHECK(back.params.weights == ck.params.weights);
    CHECK(back.params.buffers == ck.params.buffers);

    auto bytes = slurp(tmp / "c.t2l");
    bytes[4] = 9;  // version field
    std::ofstream(tmp / "v.t2l", std::ios::binary) << bytes;
    CHECK_THROWS_AS(checkpoint::read(tmp / "v.t2l"), IncompatibleArtifact);
    std::ofstream(tmp / "m.t2l", std::ios::binary) << "NOPE";
    CHECK_THROWS_AS(checkpoint::read(tmp / "m.t2l"), IncompatibleArtifact);
}

TEST_CASE("run config parsing is strict") {
    auto j = config::to_json(tiny_run());
    const auto back = config::run_config_from_json(j);
    CHECK(back.adapter == tiny_run().adapter);
    CHECK(back.tfm == tiny_run().tfm);
    CHECK(back.trainer == tiny_run().trainer);

    auto bad = j;
    bad["adapter"]["filters"] = 3;
    CHECK_THROWS_AS(config::run_config_from_json(bad), InvalidArgument);
    bad = j;
    bad["surprise"] = 1;
    CHECK_THROWS_AS(config::run_config_from_json(bad), InvalidArgument);
    bad = j;
    bad["trainer"]["epochs"] = "ten";
    CHECK_THROWS_AS(config::run_config_from_json(bad), InvalidArgument);

    auto c = tiny_run();
    c.adapter.num_classes = 4;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    CHECK_THROWS_AS(config::RunConfig::preset_named("huge"), InvalidArgument);
    CHECK(config::RunConfig::preset_named("paper-shape").tfm.feature_dim == 768);
}

TEST_CASE("cli end to end on a tiny configuration") {
    TempDir tmp("cli");
    const auto cfg = tmp / "tiny.json";
    std::ofstream(cfg) << config::to_json(tiny_run()).dump(2);

    CHECK(run_cli({"generate", "--config", cfg, "--seed", "5", "--out", tmp / "d1"}) == 0);
    CHECK(run_cli({"generate", "--config", cfg, "--seed", "5", "--out", tmp / "d2"}) == 0);
    for (const char* f : {"meta.json", "series.f32", "labels.csv"}) {
        CHECK(slurp(fs::path(tmp / "d1") / f) == slurp(fs::path(tmp / "d2") / f));
    }

    CHECK(run_cli({"train", "--config", cfg, "--data", tmp / "d1", "--out", tmp / "r1", "--seed", "3"}) == 0);
    // Shift later heap addresses so the second run sees different buffer placement.
    std::vector<std::unique_ptr<char[]>> churn;
    for (int i = 0; i < 200; ++i) {
        churn.emplace_back(new char[static_cast<std::size_t>(8 + 8 * (i % 7))]);
    }
    { std::vector<char> big(std::size_t{1} << 24, 1); }
    CHECK(run_cli({"train", "--config", cfg, "--data", tmp / "d1", "--out", tmp / "r2", "--seed", "3"}) == 0);
    CHECK(slurp(fs::path(tmp / "r1") / "checkpoint.t2l") == slurp(fs::path(tmp / "r2") / "checkpoint.t2l"));
    const auto metrics = slurp(fs::path(tmp / "r1") / "metrics.ndjson");
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);  // one train and one val record
    CHECK(metrics.find("\"split\":\"val\"") != std::string::npos);
    CHECK(fs::exists(fs::path(tmp / "r1") / "summary.json"));

    CHECK(run_cli({"init", "--config", cfg, "--out", tmp / "fresh"}) == 0);
    CHECK(run_cli({"eval", "--checkpoint", tmp / "fresh/checkpoint.t2l", "--data", tmp / "d1", "--out",
               tmp / "eval.json"}) == 0);
    CHECK(fs::exists(tmp / "eval.json"));

    CHECK(run_cli({"make-downstream", "--out", tmp / "bench.csv", "--subjects", "12", "--records-per-subject", "3"}) == 0);
    CHECK(run_cli({"embed", "--checkpoint", tmp / "r1/checkpoint.t2l", "--input", tmp / "bench.csv", "--out",
               tmp / "emb"}) == 0);
    const auto ingest = downstream::ingest_csv(tmp / "bench.csv");
    CHECK(data_lines(fs::path(tmp / "emb") / "index.csv") == ingest.records.size());
    CHECK(fs::file_size(fs::path(tmp / "emb") / "embeddings.f32") ==
          ingest.records.size() * static_cast<std::size_t>(tiny_adapter().proj_dims.second) * 4);

    CHECK(run_cli({"probe", "--config", cfg, "--embeddings", tmp / "emb/embeddings.f32", "--labels",
               tmp / "emb/index.csv", "--out", tmp / "probe"}) == 0);
    CHECK(data_lines(fs::path(tmp / "probe") / "probe_shuffles.csv") == 2);

    CHECK(run_cli({"analyze-acf", "--config", cfg, "--checkpoint", tmp / "r1/checkpoint.t2l", "--data", tmp / "d1",
               "--n", "6", "--out", tmp / "acf"}) == 0);
    CHECK(data_lines(fs::path(tmp / "acf") / "acf_max.csv") == static_cast<std::size_t>(tiny_adapter().proj_dims.second));

    CHECK(run_cli({"bench", "--config", cfg, "--lengths", "512,4096", "--repeats", "2", "--warmup", "1", "--batch", "2",
               "--out", tmp / "bench_out.csv"}) == 0);
    CHECK(data_lines(tmp / "bench_out.csv") == 2);

    CHECK(run_cli({"dump-weights", "--config", cfg, "--out", tmp / "w"}) == 0);
    CHECK(fs::file_size(fs::path(tmp / "w") / "llm_weights.f32") ==
          llm::ReferenceLlm<float>(tiny_llm()).flat_weights().size() * 4);
}

TEST_CASE("cli exit codes") {
    TempDir tmp("codes");
    CHECK(run_cli({}) == cli::kExitUsage);
    CHECK(run_cli({"frobnicate"}) == cli::kExitUsage);
    CHECK(run_cli({"generate", "--out", tmp / "x", "--periods", "30,30"}) == cli::kExitUsage);
    CHECK(run_cli({"generate", "--out", tmp / "x", "--periods", "30,abc"}) == cli::kExitUsage);
    CHECK(run_cli({"generate", "--out", tmp / "x", "--n", "3"}) == cli::kExitUsage);
    CHECK(run_cli({"train", "--data", tmp / "missing", "--out", tmp / "r"}) == cli::kExitUsage);
    CHECK(run_cli({"eval", "--checkpoint", tmp / "none.t2l", "--data", tmp.path.string()}) == cli::kExitUsage);
    CHECK(run_cli({"generate", "--config", tmp / "nothing.json", "--out", tmp / "x"}) == cli::kExitUsage);

    std::ofstream(tmp / "bad.json") << R"({"preset": "desk", "tranier": {}})";
    CHECK(run_cli({"init", "--config", tmp / "bad.json", "--out", tmp / "i"}) == cli::kExitUsage);

    std::ofstream(tmp / "junk.t2l", std::ios::binary) << "T2L1\x07\0\0\0";
    fs::create_directories(tmp / "data");
    CHECK(run_cli({"eval", "--checkpoint", tmp / "junk.t2l", "--data", tmp / "data"}) == cli::kExitFailure);
}
