#pragma once

// Deterministic dataset generation.
//
// Sample i draws from RngStream(master_seed).derive("sample", i); its label
// map uses the child ("labels", 0) and its pair ("pair", 0). Workers only
// decide scheduling, so every file and the manifest are identical for any
// worker count. The manifest is assembled in index order and written last.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxsynth/config.hpp"
#include "voxsynth/templates.hpp"

namespace voxsynth {

struct SampleRecord {
    std::int64_t index = 0;
    std::string stream;
    // Paths relative to the dataset directory, except for label maps read
    // from elsewhere, which keep the path they were given.
    std::string labels_file, labels_sha256;
    std::string v1_file, v1_sha256;
    std::string v2_file, v2_sha256;
    // Labels after the shared geometric stage; aligned with v1 and v2.
    std::string pair_labels_file, pair_labels_sha256;
    std::string provenance_file, provenance_sha256;
    std::uint16_t max_label = 0;
    // Present when the label map was synthesized in this run.
    std::optional<std::int64_t> n_templates;
    std::optional<bool> fg_applied;
    std::optional<double> p_fg;
    std::optional<bool> envelope_applied;
    std::optional<double> p_envelope;
};

struct SampleFailure {
    std::int64_t index = 0;
    std::string code;
    std::string message;
};

struct DatasetManifest {
    std::string engine_version = kEngineVersion;
    std::uint64_t master_seed = 0;
    std::string config_hash;
    std::string bank_hash;
    std::string kind;  // "labels" or "pairs"
    std::int64_t count = 0;
    std::vector<SampleRecord> samples;
    std::vector<SampleFailure> failures;
};

nlohmann::json to_json(const DatasetManifest &m);
DatasetManifest manifest_from_json(const nlohmann::json &j);
DatasetManifest read_manifest(const std::filesystem::path &path);

// Files missing or differing from their recorded digest.
std::vector<std::string> verify_manifest(const std::filesystem::path &dataset_dir, const DatasetManifest &m);

struct GenerateOptions {
    std::filesystem::path out_dir;
    std::int64_t count = 1;
    std::uint64_t master_seed = 0;
    int workers = 1;
    bool write_pairs = true;  // false: label maps only
    std::string extension = ".nii.gz";
};

inline constexpr const char *kManifestName = "manifest.json";

// Synthesizes `count` label maps (and pairs) from the bank.
DatasetManifest generate_dataset(const TemplateBank &bank, const EngineConfig &cfg, const GenerateOptions &opts);

// One pair per stored label map; sample i uses label_files[i].
DatasetManifest generate_pairs_from_labels(const std::vector<std::filesystem::path> &label_files,
                                           const EngineConfig &cfg, const GenerateOptions &opts);

// Sorted volume files (.nii, .nii.gz, .raw) of a directory.
std::vector<std::filesystem::path> list_volume_files(const std::filesystem::path &dir);

}  // namespace voxsynth
