#pragma once

#include <string>
#include <vector>

namespace treval {

// ASCII-only case fold; multi-byte UTF-8 sequences pass through.
std::string to_lower_ascii(std::string text);

// Strips leading/trailing ASCII whitespace.
std::string trim_ascii(const std::string& text);

std::vector<std::string> split(const std::string& text, char sep);

bool is_ascii_space(char c);

}  // namespace treval
