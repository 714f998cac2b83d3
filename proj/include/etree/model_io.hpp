#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "etree/bit_matrix.hpp"
#include "etree/bytes.hpp"
#include "etree/channel.hpp"
#include "etree/crypto.hpp"
#include "etree/error.hpp"
#include "etree/forest.hpp"
#include "etree/model.hpp"
#include "etree/schema.hpp"

namespace etree::io {

inline constexpr std::array<std::uint8_t, 4> model_magic{'E', 'T', 'M', 'D'};
inline constexpr std::array<std::uint8_t, 4> file_magic{'E', 'T', 'M', 'F'};
inline constexpr std::uint32_t format_version = 1;

/// Model blob: magic, version u32, schema hash, gamma u64, P u64, M u64,
/// m_d u64, M_t bits row by row (each row P bits), isDummy bits, node
/// records (u64 each), leaf table (u64 each).
inline Bytes encode_model(const ObliviousModel& m) {
  const auto& s = m.schema();
  const std::size_t paths = m.paths();
  ByteWriter w;
  w.bytes(model_magic);
  w.u32(format_version);
  w.bytes(s.hash());
  w.u64(m.gamma());
  w.u64(paths);
  w.u64(s.total_bits());
  w.u64(s.label_arity());
  std::vector<word> row(words_for(paths));
  for (std::size_t r = 0; r < m.columns().rows(); ++r) {
    std::fill(row.begin(), row.end(), word{0});
    for (std::size_t p = 0; p < paths; ++p) row[p / 64] |= word{m.columns().get(r, p)} << (p % 64);
    w.packed_bits(row, paths);
  }
  std::fill(row.begin(), row.end(), word{0});
  for (std::size_t p = 0; p < paths; ++p) row[p / 64] |= (m.is_dummy()[p] & 1) << (p % 64);
  w.packed_bits(row, paths);
  for (word v : m.nodes()) w.u64(v);
  for (word v : m.leaves().data()) w.u64(v);
  return w.take();
}

inline ObliviousModel decode_model(const FeatureSchema& schema, ByteReader& r) {
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), model_magic.begin())) throw IntegrityError("model blob: bad magic");
  if (r.u32() != format_version) throw IntegrityError("model blob: unsupported version");
  auto hash = r.bytes(32);
  const auto expect = schema.hash();
  if (!std::equal(hash.begin(), hash.end(), expect.begin())) throw IntegrityError("model blob: schema hash mismatch");
  const std::uint64_t gamma = r.u64();
  const std::uint64_t paths = r.u64();
  if (r.u64() != schema.total_bits() || r.u64() != schema.label_arity())
    throw IntegrityError("model blob: dimensions disagree with schema");
  const std::size_t height = schema.instance_bits();
  const std::size_t node_stride = schema.attribute_count() + 1;
  const std::size_t leaf_stride = schema.pair_space() + schema.label_arity() + 2;
  const std::size_t row_bytes = (paths + 7) / 8;
  if (paths == 0 || r.remaining() != (height + 1) * row_bytes + 8 * paths * (node_stride + leaf_stride))
    throw IntegrityError("model blob: length does not match its header");

  BitColumns cols(height, paths);
  std::vector<word> row(words_for(paths));
  for (std::size_t h = 0; h < height; ++h) {
    r.packed_bits(row, paths);
    for (std::size_t p = 0; p < paths; ++p) cols.set(h, p, (row[p / 64] >> (p % 64)) & 1);
  }
  r.packed_bits(row, paths);
  std::vector<word> dummy(paths);
  for (std::size_t p = 0; p < paths; ++p) dummy[p] = (row[p / 64] >> (p % 64)) & 1;
  std::vector<word> nodes(paths * node_stride);
  for (auto& v : nodes) v = r.u64();
  LeafTable leaves(paths, schema.pair_space(), schema.label_arity());
  for (auto& v : leaves.data()) v = r.u64();
  return ObliviousModel::from_parts(schema, gamma, std::move(cols), std::move(dummy), std::move(nodes),
                                    std::move(leaves));
}

inline ObliviousModel decode_model(const FeatureSchema& schema, std::span<const std::uint8_t> blob) {
  ByteReader r(blob);
  return decode_model(schema, r);
}

/// What a model file holds.
using Stored = std::variant<ObliviousModel, ForestModel>;

/// Model file: magic, version u32, kind u8 (1 tree, 2 forest), schema json,
/// payload, SHA-256 over everything before the digest. A tree payload is one
/// length-prefixed blob; a forest payload is seed u64, tree count u32 and
/// per tree its subset (u32 count, u32 indices) followed by its blob.
inline Bytes encode_file(const Stored& stored) {
  ByteWriter w;
  w.bytes(file_magic);
  w.u32(format_version);
  auto put_blob = [&](const ObliviousModel& m) {
    const Bytes b = encode_model(m);
    w.u64(b.size());
    w.bytes(b);
  };
  if (const auto* m = std::get_if<ObliviousModel>(&stored)) {
    w.u8(1);
    w.str(m->schema().to_json().dump());
    put_blob(*m);
  } else {
    const auto& f = std::get<ForestModel>(stored);
    w.u8(2);
    w.str(f.schema().to_json().dump());
    w.u64(f.seed());
    w.u32(static_cast<std::uint32_t>(f.tree_count()));
    for (const auto& t : f.trees()) {
      w.u32(static_cast<std::uint32_t>(t.subset.size()));
      for (auto i : t.subset) w.u32(static_cast<std::uint32_t>(i));
      put_blob(t.model);
    }
  }
  const auto digest = crypto::sha256(w.data());
  w.bytes(digest);
  return w.take();
}

inline Stored decode_file(std::span<const std::uint8_t> data) {
  if (data.size() < 32 + 4) throw IntegrityError("model file: too short");
  const auto body = data.first(data.size() - 32);
  const auto digest = crypto::sha256(body);
  if (!std::equal(digest.begin(), digest.end(), data.end() - 32)) throw IntegrityError("model file: digest mismatch");
  ByteReader r(body);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), file_magic.begin())) throw IntegrityError("model file: bad magic");
  if (r.u32() != format_version) throw IntegrityError("model file: unsupported version");
  const std::uint8_t kind = r.u8();
  FeatureSchema schema;
  try {
    schema = FeatureSchema::from_json(nlohmann::json::parse(r.str()));
  } catch (const std::exception& e) {
    throw IntegrityError(std::string("model file: bad schema: ") + e.what());
  }
  auto get_blob = [&](const FeatureSchema& s) {
    auto blob = r.bytes(r.u64());
    return decode_model(s, blob);
  };
  Stored out;
  if (kind == 1) {
    out = get_blob(schema);
  } else if (kind == 2) {
    const std::uint64_t seed = r.u64();
    const std::uint32_t count = r.u32();
    std::vector<ForestTree> trees;
    for (std::uint32_t t = 0; t < count; ++t) {
      std::vector<std::size_t> subset(r.u32());
      for (auto& i : subset) {
        i = r.u32();
        if (i >= schema.attribute_count()) throw IntegrityError("model file: subset index out of range");
      }
      auto ps = project_schema(schema, subset);
      auto model = get_blob(ps);
      trees.push_back({std::move(subset), std::move(ps), std::move(model)});
    }
    out = ForestModel::from_trees(schema, seed, std::move(trees));
  } else {
    throw IntegrityError("model file: unknown payload kind");
  }
  if (!r.done()) throw IntegrityError("model file: trailing bytes");
  return out;
}

inline void save(const std::string& path, const Stored& stored, const std::optional<crypto::Key128>& key = {}) {
  Bytes data = encode_file(stored);
  if (key) data = channel::seal_blob(*key, data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

inline Stored load(const std::string& path, const std::optional<crypto::Key128>& key = {}) {
  Bytes data = channel::read_file(path);
  if (channel::is_sealed_blob(data)) {
    if (!key) throw IntegrityError("model file is sealed; a key file is required");
    data = channel::open_blob(*key, data);
  }
  return decode_file(data);
}

}  // namespace etree::io
