#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "voxsynth/appearance.hpp"
#include "voxsynth/label_engine.hpp"
#include "voxsynth/templates.hpp"

namespace voxsynth {

inline constexpr const char *kEngineVersion = "voxsynth 0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

struct EngineConfig {
    LabelEngineConfig labels;
    AugmentationConfig appearance;
    SmshapesConfig smshapes;
    // Size of the generated bank when no template manifest is given.
    std::int64_t smshapes_bank_size = 32;

    void validate() const;
};

// {"schema": "voxsynth-config", "version": 1, "labels": {...}, ...}
void to_json(nlohmann::json &j, const EngineConfig &c);
// Missing sections and keys keep their defaults; unknown top-level keys and a
// newer schema version are rejected.
void from_json(const nlohmann::json &j, EngineConfig &c);

EngineConfig load_config(const std::filesystem::path &path);

// SHA-256 of the compact dump of the full (defaults filled in) document.
// Object keys are sorted, so key order in the source file does not matter.
std::string config_hash(const EngineConfig &c);

}  // namespace voxsynth
