#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cyclife/error.hpp"

namespace cyclife::csv {

// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) fail(ErrorCode::invalid_argument, "cannot format number");
  return std::string(buf, ptr);
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::string join(const std::vector<std::string>& fields, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(sep);
    out += fields[i];
  }
  return out;
}

// A parsed CSV table: header row plus data rows, with the source path kept
// for error messages.
struct Table {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    fail(ErrorCode::schema, path + ": missing column '" + std::string(name) + "'");
  }

  double number(std::size_t row, std::size_t col) const {
    const std::string& text = rows[row][col];
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
      fail(ErrorCode::schema, path + ": row " + std::to_string(row + 2) + ", field '" +
                                  header[col] + "': not a finite number: '" + text + "'");
    }
    return value;
  }

  long long integer(std::size_t row, std::size_t col) const {
    const std::string& text = rows[row][col];
    long long value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
      fail(ErrorCode::schema, path + ": row " + std::to_string(row + 2) + ", field '" +
                                  header[col] + "': not an integer: '" + text + "'");
    }
    return value;
  }
};

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, path.string() + ": cannot open for writing");
  out << text;
  if (!out) fail(ErrorCode::io, path.string() + ": write failed");
}

// Reads a CSV file. When `expected_header` is non-empty the header row must
// match it exactly.
inline Table read_table(const std::filesystem::path& path,
                        const std::vector<std::string>& expected_header = {}) {
  Table table;
  table.path = path.string();
  std::istringstream in(read_text(path));
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      table.header = split(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      fail(ErrorCode::schema, table.path + ": row " + std::to_string(table.rows.size() + 2) +
                                  ": expected " + std::to_string(table.header.size()) +
                                  " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) fail(ErrorCode::schema, table.path + ": empty file, header missing");
  if (!expected_header.empty() && table.header != expected_header) {
    fail(ErrorCode::schema, table.path + ": unexpected header '" + join(table.header) +
                                "', expected '" + join(expected_header) + "'");
  }
  return table;
}

// Incremental writer producing "\n"-terminated rows.
class Writer {
 public:
  explicit Writer(const std::vector<std::string>& header) { row(header); }

  void row(const std::vector<std::string>& fields) {
    text_ += join(fields);
    text_.push_back('\n');
  }

  const std::string& str() const { return text_; }
  void save(const std::filesystem::path& path) const { write_text(path, text_); }

 private:
  std::string text_;
};

}  // namespace cyclife::csv
