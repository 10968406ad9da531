#pragma once

// On-disk layout of a synthetic dataset directory:
//
//   meta.json    format tag, version, n, length, period_set, master_seed, max_nonperiodic
//   series.f32   n * length little-endian float32, row-major, one record per sample
//   labels.csv   index,period_class,period,seed,split
//
// Writing the same dataset twice produces byte-identical files.

#include "t2l/synthgen.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace t2l::io {

inline constexpr int kDatasetVersion = 1;

void write_dataset(const std::filesystem::path& dir, const synth::SyntheticDataset& ds);
synth::SyntheticDataset read_dataset(const std::filesystem::path& dir);

// Little-endian float32 / float64 helpers shared by every binary artifact.
void write_f32(std::ostream& out, std::span<const float> values);
void write_f64(std::ostream& out, std::span<const double> values);
std::vector<float> read_f32(std::istream& in, std::size_t count);
std::vector<double> read_f64(std::istream& in, std::size_t count);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace t2l::io
