#include "treval/jsonl.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "treval/error.hpp"

namespace treval {

namespace {

bool is_blank(const std::string& line) {
  for (char c : line) {
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

}  // namespace

void for_each_jsonl(const std::string& path,
                    const std::function<void(const json&, int)>& fn) {
  std::ifstream in(path);
  if (!in) raise(Errc::IoError, "cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded()) {
      raise(Errc::ParseError,
            path + ":" + std::to_string(line_no) + ": invalid JSON (line=" +
                std::to_string(line_no) + ")");
    }
    fn(row, line_no);
  }
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> rows;
  for_each_jsonl(path, [&](const json& row, int) { rows.push_back(row); });
  return rows;
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) out << row.dump() << '\n';
  write_file_atomic(path, out.str());
}

void append_jsonl(const std::string& path, const json& row) {
  std::ofstream out(path, std::ios::app);
  if (!out) raise(Errc::IoError, "cannot append to " + path);
  out << row.dump() << '\n';
  out.flush();
  if (!out) raise(Errc::IoError, "write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoError, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::IoError, "cannot open " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) raise(Errc::IoError, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) raise(Errc::IoError, "rename " + tmp + " -> " + path + ": " + ec.message());
}

bool file_exists(const std::string& path) {
  std::error_code ec;
  return std::filesystem::exists(path, ec);
}

}  // namespace treval
