#pragma once

// Rectangular result tables and their CSV form (comma, header row, '.' decimal, LF).

#include "../errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace attainable::harness {

using Cell = std::variant<double, std::int64_t, std::string>;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::map<std::string, std::string> metadata;

  ResultTable() = default;
  explicit ResultTable(std::vector<std::string> cols) : columns(std::move(cols)) {}

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size())
      throw DimensionError("ResultTable: row has " + std::to_string(row.size()) + " cells, expected " +
                           std::to_string(columns.size()));
    rows.push_back(std::move(row));
  }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw DimensionError("ResultTable: no column '" + name + "'");
  }

  /// Numeric view of a column; integers are widened, strings rejected.
  std::vector<double> numeric_column(const std::string& name) const {
    const std::size_t c = column_index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
      if (const auto* d = std::get_if<double>(&row[c])) out.push_back(*d);
      else if (const auto* i = std::get_if<std::int64_t>(&row[c])) out.push_back(static_cast<double>(*i));
      else throw DomainError("ResultTable: column '" + name + "' is not numeric");
    }
    return out;
  }
};

/// Shortest round-trip representation; independent of the global locale.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_cell(const Cell& cell) {
  if (const auto* d = std::get_if<double>(&cell)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  const std::string& s = std::get<std::string>(cell);
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + "\"";
}

inline void write_csv(const ResultTable& table, std::ostream& os) {
  for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_cell(row[i]);
    os << '\n';
  }
}

inline std::string to_csv(const ResultTable& table) {
  std::ostringstream os;
  write_csv(table, os);
  return os.str();
}

}  // namespace attainable::harness
