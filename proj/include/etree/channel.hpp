#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "etree/bytes.hpp"
#include "etree/crypto.hpp"
#include "etree/error.hpp"
#include "etree/schema.hpp"

namespace etree::channel {

enum class BatchKind : std::uint8_t { training = 1, inference = 2 };

inline const char* to_string(BatchKind k) { return k == BatchKind::training ? "training" : "inference"; }

struct SealedBatch {
  BatchKind kind = BatchKind::training;
  std::uint64_t batch_id = 0;
  crypto::Nonce nonce{};
  Bytes ciphertext;
  crypto::Tag tag{};
  friend bool operator==(const SealedBatch&, const SealedBatch&) = default;
};

inline constexpr std::array<std::uint8_t, 4> wire_magic{'E', 'T', 'B', '1'};

/// magic, kind u8, batch_id u64, nonce, ct_len u32, ciphertext, tag.
inline Bytes encode_wire(const SealedBatch& b) {
  ByteWriter w;
  w.bytes(wire_magic);
  w.u8(static_cast<std::uint8_t>(b.kind));
  w.u64(b.batch_id);
  w.bytes(b.nonce);
  w.u32(static_cast<std::uint32_t>(b.ciphertext.size()));
  w.bytes(b.ciphertext);
  w.bytes(b.tag);
  return w.take();
}

inline SealedBatch read_wire(ByteReader& r) {
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), wire_magic.begin())) throw IntegrityError("sealed batch: bad magic");
  SealedBatch b;
  const std::uint8_t kind = r.u8();
  if (kind != 1 && kind != 2) throw IntegrityError("sealed batch: unknown kind");
  b.kind = static_cast<BatchKind>(kind);
  b.batch_id = r.u64();
  auto nonce = r.bytes(b.nonce.size());
  std::copy(nonce.begin(), nonce.end(), b.nonce.begin());
  auto ct = r.bytes(r.u32());
  b.ciphertext.assign(ct.begin(), ct.end());
  auto tag = r.bytes(b.tag.size());
  std::copy(tag.begin(), tag.end(), b.tag.begin());
  return b;
}

inline SealedBatch decode_wire(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  SealedBatch b = read_wire(r);
  if (!r.done()) throw IntegrityError("sealed batch: trailing bytes");
  return b;
}

/// Row count u32, then every row as ceil(width / 8) little-endian bytes.
inline Bytes serialize_rows(std::span<const BitRow> rows, std::size_t width) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(rows.size()));
  for (const auto& r : rows) {
    if (r.width() != width) throw DataError("row width does not match channel width");
    w.packed_bits(r.words(), width);
  }
  return w.take();
}

inline std::vector<BitRow> deserialize_rows(std::span<const std::uint8_t> bytes, std::size_t width) {
  ByteReader r(bytes);
  const std::uint32_t n = r.u32();
  if (width == 0 || r.remaining() != std::size_t{n} * ((width + 7) / 8))
    throw IntegrityError("row payload length does not match row count");
  std::vector<BitRow> rows;
  rows.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    BitRow row(width);
    r.packed_bits(row.words(), width);
    rows.push_back(std::move(row));
  }
  return rows;
}

enum class Role : std::uint8_t { data_owner, trusted_zone };

/// One end of an established channel: the 128-bit key, the pinned schema
/// hash, this side's nonce salt and the send/receive counters.
class Session {
 public:
  Session(Role role, const crypto::Key128& key, std::array<std::uint8_t, 4> salt, const crypto::Digest& schema_hash)
      : role_(role), key_(key), salt_(salt), schema_hash_(schema_hash) {}

  Role role() const { return role_; }
  const crypto::Digest& schema_hash() const { return schema_hash_; }
  std::uint64_t sent() const { return send_counter_; }

  SealedBatch seal(BatchKind kind, std::span<const std::uint8_t> plaintext) {
    SealedBatch b;
    b.kind = kind;
    b.batch_id = ++next_id_[index(kind)];
    std::copy(salt_.begin(), salt_.end(), b.nonce.begin());
    const std::uint64_t counter = send_counter_++;
    for (int i = 0; i < 8; ++i) b.nonce[4 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(counter >> (8 * i));
    const Bytes ad = associated_data(kind, b.batch_id);
    b.ciphertext = crypto::aes_gcm_seal(key_, b.nonce, ad, plaintext, b.tag);
    return b;
  }

  /// Verifies the tag, then the ordering: batch ids must strictly increase
  /// per kind. Counters only advance on success.
  Bytes open(const SealedBatch& b) {
    const Bytes ad = associated_data(b.kind, b.batch_id);
    Bytes pt = crypto::aes_gcm_open(key_, b.nonce, ad, b.ciphertext, b.tag);
    auto& last = last_seen_[index(b.kind)];
    if (b.batch_id <= last)
      throw IntegrityError(std::string("replayed or out-of-order ") + to_string(b.kind) + " batch " +
                           std::to_string(b.batch_id));
    last = b.batch_id;
    return pt;
  }

 private:
  static std::size_t index(BatchKind k) { return k == BatchKind::training ? 0 : 1; }

  Bytes associated_data(BatchKind kind, std::uint64_t batch_id) const {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(kind));
    w.u64(batch_id);
    w.bytes(schema_hash_);
    return w.take();
  }

  Role role_;
  crypto::Key128 key_;
  std::array<std::uint8_t, 4> salt_;
  crypto::Digest schema_hash_;
  std::uint64_t send_counter_ = 0;
  std::array<std::uint64_t, 2> next_id_{};
  std::array<std::uint64_t, 2> last_seen_{};
};

/// Handshake state of one side: an ephemeral X25519 key and the schema the
/// side pins.
class Endpoint {
 public:
  Endpoint(Role role, const FeatureSchema& schema) : role_(role), schema_hash_(schema.hash()) {}

  const crypto::PublicKey& public_key() const { return keys_.public_key(); }

  /// Simulated attestation evidence binding this side's key to its schema.
  crypto::Digest quote() const { return quote_for(keys_.public_key(), schema_hash_); }

  static crypto::Digest quote_for(const crypto::PublicKey& pub, const crypto::Digest& schema_hash) {
    ByteWriter w;
    const std::string label = "etree-attestation";
    w.bytes({reinterpret_cast<const std::uint8_t*>(label.data()), label.size()});
    w.bytes(pub);
    w.bytes(schema_hash);
    return crypto::sha256(w.data());
  }

  /// Derives the session from the peer's public key. Key and both salts come
  /// from HKDF-SHA256 over the X25519 secret, salted with this side's schema
  /// hash and bound to both public keys in data-owner-first order.
  Session finish(const crypto::PublicKey& peer) const {
    const Bytes secret = keys_.agree(peer);
    ByteWriter info;
    const std::string label = "etree channel v1";
    info.bytes({reinterpret_cast<const std::uint8_t*>(label.data()), label.size()});
    info.bytes(role_ == Role::data_owner ? keys_.public_key() : peer);
    info.bytes(role_ == Role::data_owner ? peer : keys_.public_key());
    const Bytes okm = crypto::hkdf_sha256(secret, schema_hash_, info.data(), 16 + 4 + 4);
    crypto::Key128 key{};
    std::copy_n(okm.begin(), 16, key.begin());
    std::array<std::uint8_t, 4> salt{};
    std::copy_n(okm.begin() + (role_ == Role::data_owner ? 16 : 20), 4, salt.begin());
    return Session(role_, key, salt, schema_hash_);
  }

 private:
  Role role_;
  crypto::Digest schema_hash_;
  crypto::KeyPair keys_;
};

/// Data-owner facade: encodes and seals batches for the trusted zone.
class DataOwner {
 public:
  DataOwner(FeatureSchema schema, Session session) : schema_(std::move(schema)), session_(std::move(session)) {}

  const FeatureSchema& schema() const { return schema_; }

  SealedBatch seal_training(std::span<const EncodedSample> samples) {
    std::vector<BitRow> rows;
    for (const auto& s : samples) rows.push_back(s.bits);
    return session_.seal(BatchKind::training, serialize_rows(rows, schema_.total_bits()));
  }

  SealedBatch seal_inference(std::span<const EncodedInstance> instances) {
    std::vector<BitRow> rows;
    for (const auto& x : instances) rows.push_back(x.bits);
    return session_.seal(BatchKind::inference, serialize_rows(rows, schema_.instance_bits()));
  }

  Session& session() { return session_; }

 private:
  FeatureSchema schema_;
  Session session_;
};

/// Trusted-zone facade: the only place sealed batches are opened.
class TrustedZone {
 public:
  TrustedZone(FeatureSchema schema, Session session) : schema_(std::move(schema)), session_(std::move(session)) {}

  const FeatureSchema& schema() const { return schema_; }

  std::vector<EncodedSample> open_training(const SealedBatch& b) {
    if (b.kind != BatchKind::training) throw IntegrityError("expected a training batch");
    std::vector<EncodedSample> out;
    for (auto& r : deserialize_rows(session_.open(b), schema_.total_bits())) out.push_back({std::move(r)});
    return out;
  }

  std::vector<EncodedInstance> open_inference(const SealedBatch& b) {
    if (b.kind != BatchKind::inference) throw IntegrityError("expected an inference batch");
    std::vector<EncodedInstance> out;
    for (auto& r : deserialize_rows(session_.open(b), schema_.instance_bits())) out.push_back({std::move(r)});
    return out;
  }

  Session& session() { return session_; }

 private:
  FeatureSchema schema_;
  Session session_;
};

/// Runs the handshake. The data owner transfers its schema; the trusted zone
/// pins `zone_schema` (the schema it was deployed with) and the owner checks
/// the zone's quote. A schema mismatch surfaces as tag failures on every
/// batch.
inline std::pair<DataOwner, TrustedZone> setup(const FeatureSchema& owner_schema, const FeatureSchema& zone_schema) {
  Endpoint owner(Role::data_owner, owner_schema);
  Endpoint zone(Role::trusted_zone, zone_schema);
  if (Endpoint::quote_for(zone.public_key(), zone_schema.hash()) != zone.quote())
    throw IntegrityError("attestation quote does not verify");
  return {DataOwner(owner_schema, owner.finish(zone.public_key())),
          TrustedZone(zone_schema, zone.finish(owner.public_key()))};
}

inline std::pair<DataOwner, TrustedZone> setup(const FeatureSchema& schema) { return setup(schema, schema); }

/// Session over a pre-shared key, for file pipelines where both sides run at
/// different times. The nonce salt is derived from the key and the role.
inline Session preshared_session(Role role, const crypto::Key128& key, const FeatureSchema& schema) {
  ByteWriter w;
  w.bytes(key);
  w.u8(static_cast<std::uint8_t>(role));
  const auto d = crypto::sha256(w.data());
  return Session(role, key, {d[0], d[1], d[2], d[3]}, schema.hash());
}

/// Bounded multi-producer single-consumer FIFO.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity = 1024) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("queue capacity must be >= 1");
  }

  /// Blocks while full; returns false once the queue is closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  /// Up to n items in FIFO order. Non-blocking calls return what is queued.
  /// Blocking calls wait for n items, for close(), or for `max_wait`,
  /// whichever comes first, and then return what is queued.
  std::vector<T> pop_n(std::size_t n, bool block, std::optional<std::chrono::milliseconds> max_wait = std::nullopt) {
    std::unique_lock lock(mu_);
    if (block) {
      auto ready = [&] { return closed_ || items_.size() >= n; };
      if (max_wait)
        not_empty_.wait_for(lock, *max_wait, ready);
      else
        not_empty_.wait(lock, ready);
    }
    std::vector<T> out;
    while (out.size() < n && !items_.empty()) {
      out.push_back(std::move(items_.front()));
      items_.pop_front();
    }
    not_full_.notify_all();
    return out;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

/// Host-side Training and Inference buffers.
class BatchBuffers {
 public:
  explicit BatchBuffers(std::size_t capacity = 1024) : training_(capacity), inference_(capacity) {}

  bool push(SealedBatch b) { return queue(b.kind).push(std::move(b)); }

  std::vector<SealedBatch> pop_n(BatchKind kind, std::size_t n, bool block,
                                 std::optional<std::chrono::milliseconds> max_wait = std::nullopt) {
    return queue(kind).pop_n(n, block, max_wait);
  }

  void close() {
    training_.close();
    inference_.close();
  }

  std::size_t size(BatchKind kind) const { return kind == BatchKind::training ? training_.size() : inference_.size(); }

 private:
  BoundedQueue<SealedBatch>& queue(BatchKind k) { return k == BatchKind::training ? training_ : inference_; }
  BoundedQueue<SealedBatch> training_, inference_;
};

/// File spool: wire records back to back.
inline void append_spool(const std::string& path, const SealedBatch& b) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot open spool '" + path + "'");
  const Bytes w = encode_wire(b);
  out.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size()));
}

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

inline std::vector<SealedBatch> read_spool(const std::string& path) {
  const Bytes data = read_file(path);
  ByteReader r(data);
  std::vector<SealedBatch> out;
  while (!r.done()) out.push_back(read_wire(r));
  return out;
}

inline constexpr std::array<std::uint8_t, 4> blob_magic{'E', 'T', 'S', 'B'};

/// Seals an opaque blob (e.g. a model file) under a standalone key with a
/// random nonce: magic, nonce, ct_len u64, ciphertext, tag.
inline Bytes seal_blob(const crypto::Key128& key, std::span<const std::uint8_t> plaintext) {
  crypto::Nonce nonce{};
  crypto::random_bytes(nonce);
  crypto::Tag tag{};
  const Bytes ct = crypto::aes_gcm_seal(key, nonce, blob_magic, plaintext, tag);
  ByteWriter w;
  w.bytes(blob_magic);
  w.bytes(nonce);
  w.u64(ct.size());
  w.bytes(ct);
  w.bytes(tag);
  return w.take();
}

inline bool is_sealed_blob(std::span<const std::uint8_t> data) {
  return data.size() >= 4 && std::equal(blob_magic.begin(), blob_magic.end(), data.begin());
}

inline Bytes open_blob(const crypto::Key128& key, std::span<const std::uint8_t> data) {
  ByteReader r(data);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), blob_magic.begin())) throw IntegrityError("sealed blob: bad magic");
  crypto::Nonce nonce{};
  auto n = r.bytes(nonce.size());
  std::copy(n.begin(), n.end(), nonce.begin());
  auto ct = r.bytes(r.u64());
  crypto::Tag tag{};
  auto t = r.bytes(tag.size());
  std::copy(t.begin(), t.end(), tag.begin());
  if (!r.done()) throw IntegrityError("sealed blob: trailing bytes");
  return crypto::aes_gcm_open(key, nonce, blob_magic, ct, tag);
}

/// Key files hold 32 hex digits.
inline crypto::Key128 load_key(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open key file '" + path + "'");
  std::string hex;
  in >> hex;
  const Bytes raw = crypto::from_hex(hex);
  if (raw.size() != 16) throw DataError("key file must hold 16 bytes as hex");
  crypto::Key128 key{};
  std::copy(raw.begin(), raw.end(), key.begin());
  return key;
}

inline crypto::Key128 generate_key() {
  crypto::Key128 key{};
  crypto::random_bytes(key);
  return key;
}

}  // namespace etree::channel
