// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/csv.hpp"

#include <charconv>
#include <cmath>

namespace mflow {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::ostream& os, std::initializer_list<std::string_view> header) : os_(os) {
  bool first = true;
  for (std::string_view h : header) {
    if (!first) os_ << ',';
    first = false;
    os_ << h;
  }
  os_ << '\n';
}

CsvWriter::CsvWriter(std::ostream& os, std::span<const std::string> header) : os_(os) {
  row_cells(header);
}

void CsvWriter::row_cells(std::span<const std::string> cells) {
  bool first = true;
  for (const std::string& c : cells) {
    if (!first) os_ << ',';
    first = false;
    os_ << c;
  }
  os_ << '\n';
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace mflow
