#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "genis/core.hpp"

namespace genis::csv {

// Minimal RFC-4180-ish reader: comma separated, optional double-quote
// escaping, first row is the header. UTF-8 passthrough, "." decimal.

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

struct Document {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Document read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open file: " + path);
  Document doc;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == std::char_traits<char>::eof() && !first) break;
    auto cells = split_line(line);
    if (first) {
      doc.header = std::move(cells);
      first = false;
    } else {
      doc.rows.push_back(std::move(cells));
    }
  }
  if (first) fail("empty input: " + path);
  return doc;
}

inline std::string escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

// Shortest representation that round-trips through parse_double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view cell) {
  // trim ASCII whitespace
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;  // nan/inf cells are unparseable by contract
  return value;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace genis::csv
