#include "t2l/dataset_io.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>
#include <sstream>

namespace t2l::io {

static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");

using nlohmann::json;

void write_f32(std::ostream& out, std::span<const float> values) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

void write_f64(std::ostream& out, std::span<const double> values) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

std::vector<float> read_f32(std::istream& in, std::size_t count) {
    std::vector<float> v(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
        throw IoError("truncated float32 payload");
    }
    return v;
}

std::vector<double> read_f64(std::istream& in, std::size_t count) {
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
        throw IoError("truncated float64 payload");
    }
    return v;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void write_dataset(const std::filesystem::path& dir, const synth::SyntheticDataset& ds) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }

    json meta;
    meta["format"] = "t2l-synthetic";
    meta["version"] = kDatasetVersion;
    meta["n"] = ds.size();
    meta["length"] = ds.length;
    meta["period_set"] = ds.period_set;
    meta["master_seed"] = ds.master_seed;
    meta["max_nonperiodic"] = ds.max_nonperiodic;
    write_text(dir / "meta.json", meta.dump(2) + "\n");

    {
        std::ofstream out(dir / "series.f32", std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + (dir / "series.f32").string());
        }
        for (const auto& s : ds.samples) {
            write_f32(out, s.series);
        }
        if (!out) {
            throw IoError("write failed for series.f32");
        }
    }

    std::ostringstream labels;
    labels << "index,period_class,period,seed,split\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.samples[i];
        labels << i << ',' << s.period_class << ',' << ds.period_set.at(static_cast<std::size_t>(s.period_class)) << ','
               << s.seed << ',' << synth::to_string(ds.split[i]) << '\n';
    }
    write_text(dir / "labels.csv", labels.str());
}

synth::SyntheticDataset read_dataset(const std::filesystem::path& dir) {
    json meta;
    try {
        meta = json::parse(read_text(dir / "meta.json"));
    } catch (const json::exception& e) {
        throw ParseError((dir / "meta.json").string() + ": " + e.what());
    }
    if (meta.value("format", "") != "t2l-synthetic") {
        throw IncompatibleArtifact((dir / "meta.json").string() + ": not a t2l synthetic dataset");
    }
    if (meta.value("version", -1) != kDatasetVersion) {
        throw IncompatibleArtifact("dataset version " + meta.value("version", json(-1)).dump() + " is not supported (expected " +
                                   std::to_string(kDatasetVersion) + ")");
    }

    synth::SyntheticDataset ds;
    const auto n = meta.at("n").get<std::size_t>();
    ds.length = meta.at("length").get<int>();
    ds.period_set = meta.at("period_set").get<std::vector<int>>();
    ds.master_seed = meta.at("master_seed").get<std::uint64_t>();
    ds.max_nonperiodic = meta.value("max_nonperiodic", 4);
    ds.samples.resize(n);
    ds.split.resize(n);

    std::ifstream in(dir / "series.f32", std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + (dir / "series.f32").string());
    }
    for (auto& s : ds.samples) {
        s.series = read_f32(in, static_cast<std::size_t>(ds.length));
    }

    std::istringstream labels(read_text(dir / "labels.csv"));
    std::string line;
    std::getline(labels, line);
    std::size_t row = 0;
    while (std::getline(labels, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream fields(line);
        std::string index, cls, period, seed, split;
        if (!std::getline(fields, index, ',') || !std::getline(fields, cls, ',') || !std::getline(fields, period, ',') ||
            !std::getline(fields, seed, ',') || !std::getline(fields, split, ',')) {
            throw ParseError("labels.csv line " + std::to_string(row + 2) + ": expected 5 fields");
        }
        if (row >= n || std::stoull(index) != row) {
            throw ParseError("labels.csv line " + std::to_string(row + 2) + ": index out of sequence");
        }
        ds.samples[row].period_class = std::stoi(cls);
        ds.samples[row].seed = std::stoull(seed);
        ds.split[row] = synth::split_from_string(split);
        ++row;
    }
    if (row != n) {
        throw ParseError("labels.csv has " + std::to_string(row) + " rows, meta.json declares " + std::to_string(n));
    }
    return ds;
}

}  // namespace t2l::io
