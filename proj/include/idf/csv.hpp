#pragma once

// Minimal CSV plumbing: unquoted comma-separated fields, header row required.
// Numbers are written in shortest round-trip form so files reload bit-exactly.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "idf/error.hpp"

namespace idf::csv {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  /// Column index by name; throws ParseError(line 1) if absent.
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ParseError("missing column '" + std::string(name) + "'", 1);
  }
  bool has_column(std::string_view name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline Table parse(std::istream& in) {
  Table table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    table.rows.push_back({line_no, std::move(fields)});
  }
  if (!have_header) throw ParseError("missing header row", line_no == 0 ? 1 : line_no);
  return table;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse(in);
}

inline double to_double(std::string_view text, std::size_t line) {
  double value = 0.0;
  const char* first = text.data();
  if (!text.empty() && text.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("not a number: '" + std::string(text) + "'", line);
  }
  return value;
}

inline long long to_int(std::string_view text, std::size_t line) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("not an integer: '" + std::string(text) + "'", line);
  }
  return value;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

inline std::string format(long long value) { return std::to_string(value); }
inline std::string format(int value) { return std::to_string(value); }
inline std::string format(std::size_t value) { return std::to_string(value); }
inline std::string format(bool value) { return value ? "true" : "false"; }
inline std::string format(const std::string& value) { return value; }
inline std::string format(const char* value) { return value; }

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <class... Fields>
  Writer& row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << format(fields), first = false), ...);
    out_ << '\n';
    return *this;
  }

  Writer& row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << '\n';
    return *this;
  }

 private:
  std::ostream& out_;
};

}  // namespace idf::csv
