#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace pathlens::cli {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_file(const std::filesystem::path& path);

/// command, resolved config, seed, input digests, tool version, UTC timestamp.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config,
                             const std::vector<std::string>& inputs);

}  // namespace pathlens::cli
