#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "nhqm/operator.hpp"

namespace nhqm {

/// Filesystem failures carry their own type so callers can map them to a
/// distinct exit code.
class io_error : public error {
 public:
  using error::error;
};

/// 17 significant digits, '.' decimal point, no locale dependence; enough to
/// round-trip any double bit-exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  if (ec != std::errc{}) throw error("format_double: conversion failed");
  return std::string(buf, ptr);
}

namespace detail {

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

/// RFC-4180-style writer: mandatory header row, comma separator, \n line
/// endings, minimal quoting.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw io_error("CsvWriter: cannot open '" + path + "' for writing");
  }

  void header(const std::vector<std::string>& cols) { raw_row(cols); }

  void row(const std::vector<std::string>& fields) { raw_row(fields); }

  void close() {
    out_.flush();
    if (!out_) throw io_error("CsvWriter: write failed");
    out_.close();
  }

 private:
  void raw_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << detail::csv_quote(fields[i]);
    }
    out_ << '\n';
    if (!out_) throw io_error("CsvWriter: write failed");
  }

  std::ofstream out_;
};

/// Plain "key: value" sidecar document.
inline void write_metadata(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("write_metadata: cannot open '" + path + "'");
  for (const auto& [k, v] : kv) out << k << ": " << v << '\n';
  out.flush();
  if (!out) throw io_error("write_metadata: write failed");
}

}  // namespace nhqm
