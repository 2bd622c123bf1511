#include "voxsynth/config.hpp"

#include <fstream>

#include "voxsynth/digest.hpp"

namespace voxsynth {
using nlohmann::json;

void EngineConfig::validate() const {
    labels.validate();
    appearance.validate();
    if (smshapes_bank_size < 1) fail(ErrorCode::invalid_argument, "smshapes_bank_size must be >= 1");
}

void to_json(json &j, const EngineConfig &c) {
    j = json{{"schema", "voxsynth-config"},
             {"version", kConfigSchemaVersion},
             {"labels", c.labels},
             {"appearance", c.appearance},
             {"smshapes", c.smshapes},
             {"smshapes_bank_size", c.smshapes_bank_size}};
}

void from_json(const json &j, EngineConfig &c) {
    if (!j.is_object()) fail(ErrorCode::invalid_argument, "config must be a JSON object");
    for (const auto &[key, _] : j.items()) {
        if (key != "schema" && key != "version" && key != "labels" && key != "appearance" && key != "smshapes" &&
            key != "smshapes_bank_size") {
            fail(ErrorCode::invalid_argument, "unknown config key: " + key);
        }
    }
    if (j.contains("schema") && j.at("schema") != "voxsynth-config") {
        fail(ErrorCode::invalid_argument, "not a voxsynth config document");
    }
    if (j.contains("version") && j.at("version").get<int>() > kConfigSchemaVersion) {
        fail(ErrorCode::invalid_argument, "config schema version is newer than this build");
    }
    if (j.contains("labels")) j.at("labels").get_to(c.labels);
    if (j.contains("appearance")) j.at("appearance").get_to(c.appearance);
    if (j.contains("smshapes")) j.at("smshapes").get_to(c.smshapes);
    if (j.contains("smshapes_bank_size")) j.at("smshapes_bank_size").get_to(c.smshapes_bank_size);
}

EngineConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        fail(ErrorCode::invalid_argument, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    EngineConfig c;
    try {
        j.get_to(c);
    } catch (const json::exception &e) {
        fail(ErrorCode::invalid_argument, "config " + path.string() + ": " + e.what());
    }
    c.validate();
    return c;
}

std::string config_hash(const EngineConfig &c) { return sha256_hex(json(c).dump()); }

}  // namespace voxsynth
