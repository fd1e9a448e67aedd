#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace cmrplan::io {

using Json = nlohmann::json;

// Writes through a sibling temp file and renames into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
void write_json_atomic(const std::filesystem::path& path, const Json& j);

std::string read_file(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

// Field access that reports missing keys as SchemaError.
const Json& require(const Json& j, std::string_view key);

} // namespace cmrplan::io
