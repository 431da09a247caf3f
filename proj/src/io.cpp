#include "ntrf/io.hpp"

#include <fstream>
#include <sstream>

#include "ntrf/common.hpp"

namespace ntrf {

void write_text_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text_atomic(path, doc.dump(1) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("malformed file " + path.string() + ": " + e.what());
  }
}

void check_format(const nlohmann::json& doc, std::string_view format, int version) {
  if (!doc.is_object() || !doc.contains("format") || !doc.contains("version")) {
    throw Error("malformed " + std::string(format) + " file: missing format/version header");
  }
  if (!doc["format"].is_string() || doc["format"].get<std::string>() != format) {
    throw Error("expected a " + std::string(format) + " file, found '" + doc["format"].dump() + "'");
  }
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != version) {
    throw Error("unsupported " + std::string(format) + " version " + doc["version"].dump());
  }
}

std::filesystem::path resolve_beside(const std::filesystem::path& anchor_file,
                                     const std::filesystem::path& relative) {
  if (relative.is_absolute()) return relative;
  return anchor_file.parent_path() / relative;
}

}  // namespace ntrf
