#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mlpref/error.hpp"

namespace mlpref {

using Json = nlohmann::ordered_json;

// Calls `fn(record, line_number)` for each non-blank line of a JSONL file.
// Throws DataError on a missing file or unparsable line (1-based line number
// in the message).
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn);

Json read_json_file(const std::filesystem::path& path);

// Writes `contents` to a sibling temp file and renames it into place, so a
// failed run never leaves a half-written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Compact single-line serialization used for every machine-readable output.
std::string dump_line(const Json& j);

// Typed field access with messages naming the field and the line.
template <typename T>
T require_field(const Json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw DataError("line " + std::to_string(line) + ": missing field '" + key + "'");
  }
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError("line " + std::to_string(line) + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace mlpref
