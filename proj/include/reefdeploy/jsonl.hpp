#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace reefdeploy {

using json = nlohmann::json;

// Invokes fn(line_number, parsed_object) for every non-blank line of a JSONL
// file. Line numbers are 1-based. Malformed lines abort with the offending
// line number in the message.
template <typename Fn>
void for_each_jsonl_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed JSONL line");
    }
    fn(line_no, obj);
  }
}

// Replace-atomic file write: the content lands under the final name only via
// rename, so readers never observe a partially written file.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write file: " + tmp.string());
    }
    out << content;
    out.flush();
    if (!out) {
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw std::runtime_error("rename failed for " + path.string() + ": " + ec.message());
  }
}

}  // namespace reefdeploy
