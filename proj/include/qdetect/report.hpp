#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "qdetect/formulas.hpp"

namespace qdetect {

enum class OutputFormat { csv, markdown };

/// A rendered result table. `meta` lines carry regeneration metadata (seed,
/// reps, version); `notes` carry summary values and verdicts.
struct Table {
  std::string title;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::pair<std::string, std::string>> notes;

  void add_row(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  void note(std::string key, std::string value) { notes.emplace_back(std::move(key), std::move(value)); }
};

/// Fixed 4-decimal rendering after round-half-even; "nan" and "inf" spelled out.
inline std::string fixed4(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  double r = round_half_even(x, 4);
  if (r == 0.0) r = 0.0; // drop negative zero
  return fmt::format("{:.4f}", r);
}

/// Quotes a CSV field when it contains a separator, quote or line break.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + '"';
}

inline std::string render_csv(const Table& t) {
  std::string out;
  for (const auto& [k, v] : t.meta) out += fmt::format("# {}={}\n", k, v);
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + csv_field(t.columns[i]);
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_field(row[i]);
    out += '\n';
  }
  for (const auto& [k, v] : t.notes) out += fmt::format("# {}={}\n", k, v);
  return out;
}

inline std::string render_markdown(const Table& t) {
  std::string out = fmt::format("### {}\n\n", t.title);
  for (const auto& [k, v] : t.meta) out += fmt::format("- {}: `{}`\n", k, v);
  if (!t.meta.empty()) out += '\n';
  out += "|";
  for (const auto& c : t.columns) out += fmt::format(" {} |", c);
  out += "\n|";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += "---|";
  out += '\n';
  for (const auto& row : t.rows) {
    out += "|";
    for (const auto& cell : row) out += fmt::format(" {} |", cell);
    out += '\n';
  }
  if (!t.notes.empty()) {
    out += '\n';
    for (const auto& [k, v] : t.notes) out += fmt::format("- **{}**: {}\n", k, v);
  }
  return out;
}

inline std::string render(const Table& t, OutputFormat f) {
  return f == OutputFormat::csv ? render_csv(t) : render_markdown(t);
}

} // namespace qdetect
