// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace mflow {

/// Shortest text that reads back to the same double; "inf"/"-inf"/"nan" for
/// non-finite values.
std::string format_double(double v);

/// Minimal CSV emitter: header on construction, one call per row.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::initializer_list<std::string_view> header);
  CsvWriter(std::ostream& os, std::span<const std::string> header);

  /// Pre-formatted cells.
  void row_cells(std::span<const std::string> cells);

  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((emit(cells, first)), ...);
    os_ << '\n';
  }

 private:
  template <typename T>
  void emit(const T& v, bool& first) {
    if (!first) os_ << ',';
    first = false;
    if constexpr (std::is_floating_point_v<T>) {
      os_ << format_double(static_cast<double>(v));
    } else if constexpr (std::is_integral_v<T>) {
      os_ << v;
    } else {
      os_ << std::string_view(v);
    }
  }

  std::ostream& os_;
};

/// Splits one CSV line on commas (no quoting support).
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace mflow
