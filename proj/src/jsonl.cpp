#include "mlpref/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "mlpref/error.hpp"

namespace mlpref {

namespace fs = std::filesystem;

void for_each_jsonl(const fs::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": malformed record");
    }
    if (!rec.is_object()) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": record is not an object");
    }
    fn(rec, lineno);
  }
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      throw DataError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move output into place: " + path.string());
  }
}

std::string dump_line(const Json& j) { return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict); }

}  // namespace mlpref
