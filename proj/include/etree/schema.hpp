#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "etree/bit_matrix.hpp"
#include "etree/crypto.hpp"
#include "etree/error.hpp"

namespace etree {

/// Fixed-width packed bit string.
class BitRow {
 public:
  BitRow() = default;
  explicit BitRow(std::size_t width) : width_(width), words_(words_for(width), 0) {}

  std::size_t width() const { return width_; }
  bool get(std::size_t i) const { return (words_.at(i / 64) >> (i % 64)) & 1; }
  void set(std::size_t i, bool v = true) {
    word& w = words_.at(i / 64);
    const word m = word{1} << (i % 64);
    w = (w & ~m) | (word{v} << (i % 64));
  }
  std::size_t popcount() const {
    std::size_t n = 0;
    for (word w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }
  std::span<const word> words() const { return words_; }
  std::span<word> words() { return words_; }

  friend bool operator==(const BitRow&, const BitRow&) = default;

 private:
  std::size_t width_ = 0;
  std::vector<word> words_;
};

/// One-hot labelled sample, M bits.
struct EncodedSample {
  BitRow bits;
  friend bool operator==(const EncodedSample&, const EncodedSample&) = default;
};

/// One-hot unlabelled instance, M - m_d bits.
struct EncodedInstance {
  BitRow bits;
  friend bool operator==(const EncodedInstance&, const EncodedInstance&) = default;
};

/// Value index per feature (label last for samples).
using ValueRow = std::vector<std::uint32_t>;

struct FeatureSpec {
  std::string name;
  std::vector<std::string> values;
};

/// Categorical feature space. The last feature is the label. Vocabulary
/// order defines bit order inside each one-hot block.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  static FeatureSchema build(std::vector<FeatureSpec> specs) {
    if (specs.size() < 2) throw DataError("schema needs at least one feature plus the label");
    FeatureSchema s;
    std::size_t offset = 0;
    std::unordered_map<std::string, int> names;
    for (auto& spec : specs) {
      if (!names.emplace(spec.name, 0).second) throw DataError("duplicate feature name '" + spec.name + "'");
      if (spec.values.size() < 2)
        throw DataError("feature '" + spec.name + "' needs at least 2 values");
      std::unordered_map<std::string, std::uint32_t> index;
      for (std::uint32_t j = 0; j < spec.values.size(); ++j) {
        if (!index.emplace(spec.values[j], j).second)
          throw DataError("feature '" + spec.name + "' has duplicate value '" + spec.values[j] + "'");
      }
      s.offsets_.push_back(offset);
      offset += spec.values.size();
      s.value_index_.push_back(std::move(index));
    }
    s.specs_ = std::move(specs);
    s.total_bits_ = offset;
    return s;
  }

  /// d: number of features including the label.
  std::size_t feature_count() const { return specs_.size(); }
  std::size_t attribute_count() const { return specs_.size() - 1; }
  std::size_t label_feature() const { return specs_.size() - 1; }
  const std::string& name(std::size_t i) const { return specs_.at(i).name; }
  const std::vector<std::string>& values(std::size_t i) const { return specs_.at(i).values; }
  std::size_t arity(std::size_t i) const { return specs_.at(i).values.size(); }
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }
  /// M.
  std::size_t total_bits() const { return total_bits_; }
  /// m_d.
  std::size_t label_arity() const { return arity(label_feature()); }
  /// M - m_d.
  std::size_t instance_bits() const { return total_bits_ - label_arity(); }
  /// L = m_d * (M - m_d).
  std::size_t pair_space() const { return label_arity() * instance_bits(); }
  /// m_max over the non-label features.
  std::size_t max_attribute_arity() const {
    std::size_t m = 0;
    for (std::size_t i = 0; i < attribute_count(); ++i) m = std::max(m, arity(i));
    return m;
  }
  const std::vector<FeatureSpec>& specs() const { return specs_; }

  std::optional<std::size_t> find_feature(const std::string& name) const {
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (specs_[i].name == name) return i;
    return std::nullopt;
  }

  std::uint32_t value_index(std::size_t feature, const std::string& token) const {
    const auto& idx = value_index_.at(feature);
    auto it = idx.find(token);
    if (it == idx.end())
      throw DataError("unknown value '" + token + "' for feature '" + name(feature) + "'");
    return it->second;
  }

  /// Feature-major, value-next, label-minor index of a (feature, value,
  /// label) triple in [0, L).
  std::size_t pair_index(std::size_t feature, std::size_t value, std::size_t label) const {
    if (feature >= attribute_count() || value >= arity(feature) || label >= label_arity())
      throw std::out_of_range("pair_index: argument out of range");
    return label_arity() * (offsets_[feature] + value) + label;
  }

  /// First pair index belonging to `feature`.
  std::size_t pair_block(std::size_t feature) const { return label_arity() * offsets_.at(feature); }

  ValueRow indices_of(std::span<const std::string> tokens, bool labelled) const {
    const std::size_t want = labelled ? feature_count() : attribute_count();
    if (tokens.size() != want)
      throw DataError("expected " + std::to_string(want) + " values, got " + std::to_string(tokens.size()));
    ValueRow row(want);
    for (std::size_t i = 0; i < want; ++i) row[i] = value_index(i, tokens[i]);
    return row;
  }

  EncodedSample encode_sample(std::span<const std::string> tokens) const {
    return encode_sample(indices_of(tokens, true));
  }

  EncodedSample encode_sample(const ValueRow& row) const {
    if (row.size() != feature_count())
      throw DataError("expected " + std::to_string(feature_count()) + " values, got " + std::to_string(row.size()));
    BitRow bits(total_bits_);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] >= arity(i)) throw DataError("value index out of range for '" + name(i) + "'");
      bits.set(offsets_[i] + row[i]);
    }
    return {std::move(bits)};
  }

  EncodedInstance encode_instance(std::span<const std::string> tokens) const {
    return encode_instance(indices_of(tokens, false));
  }

  EncodedInstance encode_instance(const ValueRow& row) const {
    if (row.size() != attribute_count())
      throw DataError("expected " + std::to_string(attribute_count()) + " values, got " +
                      std::to_string(row.size()));
    BitRow bits(instance_bits());
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] >= arity(i)) throw DataError("value index out of range for '" + name(i) + "'");
      bits.set(offsets_[i] + row[i]);
    }
    return {std::move(bits)};
  }

  /// Inverse of encoding; throws unless each block holds exactly one set bit.
  ValueRow decode(const BitRow& bits) const {
    const bool labelled = bits.width() == total_bits_;
    if (!labelled && bits.width() != instance_bits()) throw DataError("bit row width does not match schema");
    const std::size_t n = labelled ? feature_count() : attribute_count();
    ValueRow row(n);
    for (std::size_t i = 0; i < n; ++i) {
      int hits = 0;
      for (std::size_t j = 0; j < arity(i); ++j) {
        if (bits.get(offsets_[i] + j)) {
          row[i] = static_cast<std::uint32_t>(j);
          ++hits;
        }
      }
      if (hits != 1) throw DataError("block for '" + name(i) + "' is not one-hot");
    }
    return row;
  }

  std::vector<std::string> tokens_of(const ValueRow& row) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < row.size(); ++i) out.push_back(values(i).at(row[i]));
    return out;
  }

  /// Renders a bit row block by block, highest value index leftmost, blocks
  /// separated by spaces ("001 01 01 01 10").
  std::string to_bit_string(std::span<const word> words, std::size_t width) const {
    std::string out;
    for (std::size_t i = 0; i < feature_count() && offsets_[i] < width; ++i) {
      if (!out.empty()) out += ' ';
      for (std::size_t j = arity(i); j-- > 0;) {
        const std::size_t b = offsets_[i] + j;
        out += ((words[b / 64] >> (b % 64)) & 1) ? '1' : '0';
      }
    }
    return out;
  }
  std::string to_bit_string(const BitRow& row) const { return to_bit_string(row.words(), row.width()); }

  nlohmann::json to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& s : specs_) features.push_back({{"name", s.name}, {"values", s.values}});
    return {{"features", features}};
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    try {
      std::vector<FeatureSpec> specs;
      for (const auto& f : j.at("features"))
        specs.push_back({f.at("name").get<std::string>(), f.at("values").get<std::vector<std::string>>()});
      return build(std::move(specs));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed schema json: ") + e.what());
    }
  }

  static FeatureSchema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("schema file '" + path + "' is not valid json: " + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write schema file '" + path + "'");
    out << to_json().dump(2) << '\n';
  }

  /// SHA-256 over the compact canonical json; pins a schema across the
  /// channel and inside model files.
  crypto::Digest hash() const { return crypto::sha256(to_json().dump()); }

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    return a.to_json() == b.to_json();
  }

 private:
  std::vector<FeatureSpec> specs_;
  std::vector<std::size_t> offsets_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> value_index_;
  std::size_t total_bits_ = 0;
};

struct Discretization {
  std::vector<std::string> vocabulary;
  std::vector<std::string> tokens;
};

/// Maps a numeric column onto bins. With explicit `edges` (strictly
/// increasing) a value equal to an edge lands in the upper bin. Otherwise the
/// range [min, max] is cut into `bins` equal-width bins; interior boundaries
/// go to the lower bin and the maximum to the last one. Bin tokens are
/// `labels` when given, else b0, b1, ...
inline Discretization discretize(std::span<const double> column, std::size_t bins,
                                 const std::optional<std::vector<double>>& edges = std::nullopt,
                                 const std::optional<std::vector<std::string>>& labels = std::nullopt) {
  if (column.empty()) throw DataError("discretize: empty column");
  std::size_t k = bins;
  if (edges) {
    if (edges->empty()) throw DataError("discretize: explicit edges list is empty");
    for (std::size_t i = 1; i < edges->size(); ++i)
      if (!((*edges)[i - 1] < (*edges)[i])) throw DataError("discretize: edges must be strictly increasing");
    k = edges->size() + 1;
  } else if (bins < 2) {
    throw DataError("discretize: need at least 2 bins");
  }
  Discretization out;
  if (labels) {
    if (labels->size() != k) throw DataError("discretize: label count does not match bin count");
    out.vocabulary = *labels;
  } else {
    for (std::size_t b = 0; b < k; ++b) out.vocabulary.push_back("b" + std::to_string(b));
  }
  out.tokens.reserve(column.size());
  if (edges) {
    for (double x : column) {
      const auto bin = static_cast<std::size_t>(std::upper_bound(edges->begin(), edges->end(), x) - edges->begin());
      out.tokens.push_back(out.vocabulary[bin]);
    }
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(column.begin(), column.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw DataError("discretize: constant column needs explicit edges");
  const double width = (hi - lo) / static_cast<double>(k);
  for (double x : column) {
    const double pos = std::ceil((x - lo) / width) - 1.0;
    const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(k - 1)));
    out.tokens.push_back(out.vocabulary[bin]);
  }
  return out;
}

}  // namespace etree
