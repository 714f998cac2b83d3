#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "etree/error.hpp"
#include "etree/schema.hpp"

namespace etree::csv {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Splits one line on commas, trimming blanks around each field.
inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Reads a comma-separated table. Blank lines are skipped; every row must
/// have as many fields as the first line.
inline Table read(std::istream& in, bool has_header = true) {
  Table t;
  std::string line;
  std::size_t lineno = 0, width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) + " fields, got " +
                      std::to_string(fields.size()));
    if (has_header && t.header.empty())
      t.header = std::move(fields);
    else
      t.rows.push_back(std::move(fields));
  }
  return t;
}

inline Table read_file(const std::string& path, bool has_header = true) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read(in, has_header);
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
  out << '\n';
}

inline std::vector<std::string> schema_header(const FeatureSchema& s, bool labelled) {
  std::vector<std::string> h;
  const std::size_t n = labelled ? s.feature_count() : s.attribute_count();
  for (std::size_t i = 0; i < n; ++i) h.push_back(s.name(i));
  return h;
}

/// Value rows from a table whose columns carry the schema's feature names in
/// any order. When `labelled` is false the label column is optional; if
/// present it is returned in `truth`.
struct Decoded {
  std::vector<ValueRow> rows;
  std::vector<std::uint32_t> truth;
  bool has_truth = false;
};

inline Decoded decode(const FeatureSchema& s, const Table& t, bool labelled) {
  std::vector<std::size_t> col(s.feature_count(), t.header.size());
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (auto f = s.find_feature(t.header[c])) col[*f] = c;
  for (std::size_t i = 0; i < s.attribute_count(); ++i)
    if (col[i] == t.header.size()) throw DataError("csv is missing column '" + s.name(i) + "'");
  const bool label_present = col[s.label_feature()] != t.header.size();
  if (labelled && !label_present) throw DataError("csv is missing label column '" + s.name(s.label_feature()) + "'");

  Decoded d;
  d.has_truth = !labelled && label_present;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ValueRow row(labelled ? s.feature_count() : s.attribute_count());
    try {
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = s.value_index(i, t.rows[r][col[i]]);
      if (d.has_truth) d.truth.push_back(s.value_index(s.label_feature(), t.rows[r][col[s.label_feature()]]));
    } catch (const DataError& e) {
      throw DataError("row " + std::to_string(r + 1) + ": " + e.what());
    }
    d.rows.push_back(std::move(row));
  }
  return d;
}

}  // namespace etree::csv
