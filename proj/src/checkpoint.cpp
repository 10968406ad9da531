#include "t2l/checkpoint.hpp"

#include "t2l/config.hpp"
#include "t2l/dataset_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace t2l::checkpoint {

namespace {

constexpr std::array<char, 4> kMagic{'T', '2', 'L', '1'};

template <class U>
void put(std::ostream& out, U v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::istream& in, const std::string& what) {
    U v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) {
        throw IoError("checkpoint: truncated " + what);
    }
    return v;
}

}  // namespace

void write(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const config::json header{{"adapter", config::to_json(ckpt.adapter)},
                              {"tfm", config::to_json(ckpt.tfm)},
                              {"llm", config::to_json(ckpt.llm)},
                              {"period_set", ckpt.period_set}};
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint64_t>(out, ckpt.params.weights.size());
    put<std::uint64_t>(out, ckpt.params.buffers.size());
    io::write_f64(out, ckpt.params.weights);
    io::write_f64(out, ckpt.params.buffers);
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

Checkpoint read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 4 || magic != kMagic) {
        throw IncompatibleArtifact(path.string() + ": not a T2L1 checkpoint");
    }
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kVersion) {
        throw IncompatibleArtifact(path.string() + ": checkpoint version " + std::to_string(version) +
                                   " is not supported (expected " + std::to_string(kVersion) + ")");
    }
    const auto length = get<std::uint32_t>(in, "header length");
    std::string text(length, '\0');
    in.read(text.data(), length);
    if (static_cast<std::uint32_t>(in.gcount()) != length) {
        throw IoError("checkpoint: truncated header");
    }

    Checkpoint ckpt;
    try {
        const auto header = config::json::parse(text);
        ckpt.adapter = config::adapter_from_json(header.at("adapter"));
        ckpt.tfm = config::tfm_from_json(header.at("tfm"));
        ckpt.llm = config::llm_from_json(header.at("llm"));
        ckpt.period_set = header.at("period_set").get<std::vector<int>>();
    } catch (const config::json::exception& e) {
        throw IncompatibleArtifact(path.string() + ": malformed header: " + e.what());
    } catch (const InvalidArgument& e) {
        throw IncompatibleArtifact(path.string() + ": " + e.what());
    }

    const auto n_weights = get<std::uint64_t>(in, "weight count");
    const auto n_buffers = get<std::uint64_t>(in, "buffer count");
    const adapter::Adapter<double> model(ckpt.adapter, ckpt.tfm.feature_dim, ckpt.tfm.context, ckpt.llm.hidden);
    if (n_weights != model.layout().weights || n_buffers != model.layout().buffers) {
        throw IncompatibleArtifact(path.string() + ": parameter count does not match the stored adapter config");
    }
    const auto weights = io::read_f64(in, n_weights);
    const auto buffers = io::read_f64(in, n_buffers);
    ckpt.params.weights.assign(weights.begin(), weights.end());
    ckpt.params.buffers.assign(buffers.begin(), buffers.end());
    return ckpt;
}

}  // namespace t2l::checkpoint
