#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "kinegen/neural_core.hpp"

namespace kinegen::nn {

inline constexpr int kCheckpointFormatVersion = 1;

/// On-disk container: `{format_version, created, model_kind, config, arrays: [{name, shape, data}]}`.
struct Checkpoint {
    int format_version = kCheckpointFormatVersion;
    std::string created;  // ISO-8601 UTC; informational only
    std::string model_kind;
    nlohmann::json config = nlohmann::json::object();
    ParamSet params;
};

nlohmann::json params_to_json(const ParamSet& params);
/// Validates shapes against data lengths and finiteness; throws ParseError with the array name.
ParamSet params_from_json(const nlohmann::json& arrays);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws ParseError for malformed content, IoError if the file cannot be read.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string utc_timestamp();

}  // namespace kinegen::nn
