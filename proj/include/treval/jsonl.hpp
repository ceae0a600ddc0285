#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace treval {

using json = nlohmann::json;

// Blank lines are skipped; line numbers are 1-based. A malformed line
// raises Error(ParseError) naming the line.
std::vector<json> read_jsonl(const std::string& path);
void for_each_jsonl(const std::string& path,
                    const std::function<void(const json&, int)>& fn);

// Serialized with sorted keys and no whitespace (nlohmann defaults),
// so equal rows produce equal bytes.
void write_jsonl(const std::string& path, const std::vector<json>& rows);
void append_jsonl(const std::string& path, const json& row);

std::string read_text_file(const std::string& path);

// Write to <path>.tmp then rename; readers never observe a torn file.
void write_file_atomic(const std::string& path, const std::string& content);

bool file_exists(const std::string& path);

}  // namespace treval
