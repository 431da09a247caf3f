#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ntrf {

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view contents);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// Throws unless doc["format"] == format and doc["version"] == version.
void check_format(const nlohmann::json& doc, std::string_view format, int version);

/// `relative` resolved against the directory holding `anchor_file`.
std::filesystem::path resolve_beside(const std::filesystem::path& anchor_file,
                                     const std::filesystem::path& relative);

}  // namespace ntrf
