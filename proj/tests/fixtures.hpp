#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "etree/schema.hpp"

namespace etree::testing {

inline FeatureSchema weather() { return FeatureSchema::load(std::string(ETREE_DATA_DIR) + "/weather.schema.json"); }

inline std::vector<std::string> tokens(std::initializer_list<const char*> t) { return {t.begin(), t.end()}; }

enum Weather : std::size_t { outlook = 0, windy = 1, humidity = 2, temp = 3, label = 4 };

inline ValueRow random_row(const FeatureSchema& s, std::mt19937_64& rng, bool labelled = true) {
  ValueRow row(labelled ? s.feature_count() : s.attribute_count());
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<std::uint32_t>(rng() % s.arity(i));
  return row;
}

inline std::vector<EncodedSample> encode_rows(const FeatureSchema& s, const std::vector<ValueRow>& rows) {
  std::vector<EncodedSample> out;
  for (const auto& r : rows) out.push_back(s.encode_sample(r));
  return out;
}

inline std::vector<EncodedInstance> encode_instances(const FeatureSchema& s, const std::vector<ValueRow>& rows) {
  std::vector<EncodedInstance> out;
  for (const auto& r : rows) out.push_back(s.encode_instance(ValueRow(r.begin(), r.begin() + s.attribute_count())));
  return out;
}

}  // namespace etree::testing
