#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "etree/csv.hpp"
#include "etree/error.hpp"
#include "etree/schema.hpp"

namespace etree::uci {

enum class ColumnKind { categorical, numeric, binary };

struct ColumnSpec {
  std::string name;
  ColumnKind kind;
};

struct Preset {
  std::string name;
  std::vector<ColumnSpec> columns;  // label last
};

/// Adult: 14 attributes, income label.
inline Preset adult() {
  using K = ColumnKind;
  return {"adult",
          {{"age", K::numeric},
           {"workclass", K::categorical},
           {"fnlwgt", K::numeric},
           {"education", K::categorical},
           {"education-num", K::numeric},
           {"marital-status", K::categorical},
           {"occupation", K::categorical},
           {"relationship", K::categorical},
           {"race", K::categorical},
           {"sex", K::categorical},
           {"capital-gain", K::numeric},
           {"capital-loss", K::numeric},
           {"hours-per-week", K::numeric},
           {"native-country", K::categorical},
           {"income", K::categorical}}};
}

/// Covertype: 10 numeric columns, 4 wilderness and 40 soil indicators,
/// Cover_Type label 1..7.
inline Preset covertype() {
  using K = ColumnKind;
  Preset p{"covertype",
           {{"Elevation", K::numeric},
            {"Aspect", K::numeric},
            {"Slope", K::numeric},
            {"Horizontal_Distance_To_Hydrology", K::numeric},
            {"Vertical_Distance_To_Hydrology", K::numeric},
            {"Horizontal_Distance_To_Roadways", K::numeric},
            {"Hillshade_9am", K::numeric},
            {"Hillshade_Noon", K::numeric},
            {"Hillshade_3pm", K::numeric},
            {"Horizontal_Distance_To_Fire_Points", K::numeric}}};
  for (int i = 1; i <= 4; ++i) p.columns.push_back({"Wilderness_Area" + std::to_string(i), K::binary});
  for (int i = 1; i <= 40; ++i) p.columns.push_back({"Soil_Type" + std::to_string(i), K::binary});
  p.columns.push_back({"Cover_Type", K::categorical});
  return p;
}

inline Preset preset(const std::string& name) {
  if (name == "adult") return adult();
  if (name == "covertype") return covertype();
  throw ConfigError("unknown dataset preset '" + name + "' (expected adult or covertype)");
}

/// Binning per numeric column. Json form:
/// {"default_bins": 4, "columns": {"age": {"bins": 5}, "hours-per-week":
/// {"edges": [35, 45], "labels": ["part", "full", "over"]}}}.
struct DiscretizationSpec {
  struct Column {
    std::size_t bins = 0;
    std::optional<std::vector<double>> edges;
    std::optional<std::vector<std::string>> labels;
  };
  std::size_t default_bins = 4;
  std::map<std::string, Column> columns;

  static DiscretizationSpec from_json(const nlohmann::json& j) {
    DiscretizationSpec s;
    try {
      s.default_bins = j.value("default_bins", std::size_t{4});
      if (j.contains("columns"))
        for (const auto& [name, c] : j.at("columns").items()) {
          Column col;
          col.bins = c.value("bins", std::size_t{0});
          if (c.contains("edges")) col.edges = c.at("edges").get<std::vector<double>>();
          if (c.contains("labels")) col.labels = c.at("labels").get<std::vector<std::string>>();
          s.columns[name] = std::move(col);
        }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed discretization spec: ") + e.what());
    }
    return s;
  }
};

struct Dataset {
  FeatureSchema schema;
  std::vector<ValueRow> rows;
};

namespace detail {
inline double parse_number(const std::string& s, const std::string& column, std::size_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("row " + std::to_string(row + 1) + ": column '" + column + "' is not numeric: '" + s + "'");
  }
}

/// Adult's test split writes labels with a trailing period.
inline std::string normalize(const std::string& s) {
  if (!s.empty() && s.back() == '.') return s.substr(0, s.size() - 1);
  return s;
}
}  // namespace detail

/// Builds a schema and value rows from a headerless preset-ordered CSV (the
/// UCI distribution format) or one with a header naming the preset columns.
/// Categorical vocabularies are the sorted distinct tokens ('?' is a
/// token); numeric columns are binned per `spec`; binary indicators use
/// {0, 1}.
inline Dataset load(const Preset& p, const csv::Table& table, const DiscretizationSpec& spec) {
  const std::size_t width = p.columns.size();
  std::vector<std::size_t> col(width);
  if (table.header.empty()) {
    for (std::size_t i = 0; i < width; ++i) col[i] = i;
  } else {
    for (std::size_t i = 0; i < width; ++i) {
      auto it = std::find(table.header.begin(), table.header.end(), p.columns[i].name);
      if (it == table.header.end()) throw DataError(p.name + ": missing column '" + p.columns[i].name + "'");
      col[i] = static_cast<std::size_t>(it - table.header.begin());
    }
  }
  const std::size_t n = table.rows.size();
  for (std::size_t r = 0; r < n; ++r)
    if (table.rows[r].size() < width && table.header.empty())
      throw DataError(p.name + ": row " + std::to_string(r + 1) + " has " + std::to_string(table.rows[r].size()) +
                      " fields, expected " + std::to_string(width));
  if (n == 0) throw DataError(p.name + ": no rows");

  std::vector<FeatureSpec> specs;
  std::vector<std::vector<std::string>> tokens(width, std::vector<std::string>(n));
  for (std::size_t i = 0; i < width; ++i) {
    const auto& cs = p.columns[i];
    auto cell = [&](std::size_t r) { return detail::normalize(table.rows[r][col[i]]); };
    FeatureSpec fs{cs.name, {}};
    if (cs.kind == ColumnKind::numeric) {
      std::vector<double> values(n);
      for (std::size_t r = 0; r < n; ++r) values[r] = detail::parse_number(cell(r), cs.name, r);
      DiscretizationSpec::Column c;
      if (auto it = spec.columns.find(cs.name); it != spec.columns.end()) c = it->second;
      const std::size_t bins = c.bins ? c.bins : spec.default_bins;
      std::optional<std::vector<double>> edges = c.edges;
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      if (!edges && !(*hi > *lo)) edges = std::vector<double>{*lo};
      auto d = discretize(values, bins, edges, c.labels);
      fs.values = std::move(d.vocabulary);
      tokens[i] = std::move(d.tokens);
    } else {
      std::set<std::string> vocab;
      if (cs.kind == ColumnKind::binary) vocab = {"0", "1"};
      for (std::size_t r = 0; r < n; ++r) {
        tokens[i][r] = cell(r);
        if (cs.kind == ColumnKind::binary && !vocab.contains(tokens[i][r]))
          throw DataError(p.name + ": column '" + cs.name + "' must be 0/1");
        vocab.insert(tokens[i][r]);
      }
      if (vocab.size() < 2) vocab.insert("(other)");
      fs.values.assign(vocab.begin(), vocab.end());
    }
    specs.push_back(std::move(fs));
  }

  Dataset ds{FeatureSchema::build(std::move(specs)), {}};
  ds.rows.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    ValueRow row(width);
    for (std::size_t i = 0; i < width; ++i) row[i] = ds.schema.value_index(i, tokens[i][r]);
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

inline Dataset load_file(const std::string& preset_name, const std::string& path, const DiscretizationSpec& spec) {
  const Preset p = preset(preset_name);
  // A header is present when the first field names the first column.
  csv::Table t = csv::read_file(path, false);
  if (!t.rows.empty() && !t.rows.front().empty() && t.rows.front().front() == p.columns.front().name) {
    t.header = std::move(t.rows.front());
    t.rows.erase(t.rows.begin());
  }
  return load(p, t, spec);
}

}  // namespace etree::uci
