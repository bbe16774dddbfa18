#pragma once

// Dataset manifest: a JSON list of WAV files with optional labels and a
// train/test split, plus the preprocessing applied to every file.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "despawn/error.hpp"

namespace despawn::pipeline {

enum class Split { Train, Test };

inline const char* split_name(Split s) noexcept { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    throw Error(ErrorKind::InvalidInput, "split must be 'train' or 'test', got '" + name + "'");
}

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory unless absolute
    std::optional<std::string> label;
    Split split = Split::Train;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    double sample_rate = 16000.0;
    std::size_t window_size = 1024;
    std::size_t decimate = 1;
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir;  // not serialized; set on load

    std::filesystem::path resolve(const ManifestEntry& e) const {
        const std::filesystem::path p(e.path);
        return p.is_absolute() ? p : base_dir / p;
    }

    bool operator==(const DatasetManifest& o) const {
        return sample_rate == o.sample_rate && window_size == o.window_size && decimate == o.decimate &&
               entries == o.entries;
    }
};

inline void validate_manifest(const DatasetManifest& m) {
    if (!(m.sample_rate > 0.0)) throw Error(ErrorKind::InvalidInput, "manifest sample_rate must be positive");
    if (m.window_size < 2) throw Error(ErrorKind::InvalidInput, "manifest window_size must be >= 2");
    if (m.decimate < 1) throw Error(ErrorKind::InvalidInput, "manifest decimate must be >= 1");
    std::set<std::string> seen;
    for (const auto& e : m.entries) {
        if (e.path.empty()) throw Error(ErrorKind::InvalidInput, "manifest entry with empty path");
        if (!seen.insert(e.path).second) throw Error(ErrorKind::InvalidInput, "duplicate manifest path '" + e.path + "'");
    }
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json j{{"path", e.path}, {"split", split_name(e.split)}};
        if (e.label) j["label"] = *e.label;
        entries.push_back(std::move(j));
    }
    return {{"sample_rate", m.sample_rate},
            {"window_size", m.window_size},
            {"decimate", m.decimate},
            {"entries", std::move(entries)}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    try {
        DatasetManifest m;
        m.sample_rate = j.at("sample_rate").get<double>();
        m.window_size = j.at("window_size").get<std::size_t>();
        m.decimate = j.value("decimate", std::size_t{1});
        for (const auto& e : j.at("entries")) {
            ManifestEntry entry;
            entry.path = e.at("path").get<std::string>();
            if (e.contains("label") && !e["label"].is_null()) entry.label = e["label"].get<std::string>();
            entry.split = parse_split(e.value("split", std::string("train")));
            m.entries.push_back(std::move(entry));
        }
        validate_manifest(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidInput, std::string("malformed manifest: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what(), e.byte);
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    DatasetManifest m = manifest_from_json(read_json_file(path));
    m.base_dir = path.parent_path();
    return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    validate_manifest(m);
    write_json_file(path, manifest_to_json(m));
}

}  // namespace despawn::pipeline
