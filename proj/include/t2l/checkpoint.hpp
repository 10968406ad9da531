#pragma once

// Adapter checkpoint: "T2L1", u32 version, u32 header length, JSON header with the
// adapter / encoder / language-model configs (backbone seeds included), then
// u64 weight count, u64 buffer count and both vectors as little-endian float64.

#include "t2l/adapter.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace t2l::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
    adapter::AdapterConfig adapter;
    tfm::TfmConfig tfm;
    llm::LlmConfig llm;
    std::vector<int> period_set;
    adapter::AdapterParams<double> params;
};

void write(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read(const std::filesystem::path& path);

}  // namespace t2l::checkpoint
